//! The voting pipeline: classify, vote, smooth, localise, back-project,
//! threshold — for one region or many sharing a single dense pass.
//!
//! Voxels classified as foreground query the region database; every
//! retrieved neighbour casts its stored displacement vote at the voxel's
//! position, weighted by the reciprocal feature distance. The smoothed
//! vote-map argmax localises the region; votes that landed within the
//! tolerance radius of that centroid stamp their segmentation patches back
//! at their origin voxels, building the contour confidence map that is
//! finally thresholded.

use rayon::prelude::*;

use crate::dense::dense_forward_streaming;
use crate::eval::Mask;
use crate::houghdb::{fetch_seg_mask, knn_query, HoughDatabase};
use crate::net::{argmax_row, Network};
use crate::patch::Mode;
use crate::volume::{linear_index, LabelVolume, Volume};
use crate::{Error, Result};

/// Voting-stage parameters.
#[derive(Debug, Clone)]
pub struct HoughConfig {
    /// Reprojection tolerance radius in voxels (votes landing within this
    /// Euclidean distance of the detected centroid survive).
    pub radius: f64,
    /// Vote-map Gaussian smoothing in voxels.
    pub sigma: f64,
    /// Neighbours per query.
    pub k: usize,
    /// Feature-space distance cutoff (strict).
    pub max_dist: f32,
    /// Segmentation patch side.
    pub seg_patch: u8,
    /// Confidence threshold on the normalised segmentation map.
    pub threshold: f32,
    /// Weight floor guarding the reciprocal distance at zero.
    pub eps_w: f32,
}

impl Default for HoughConfig {
    fn default() -> Self {
        HoughConfig {
            radius: 3.0,
            sigma: 1.0,
            k: 20,
            max_dist: f32::INFINITY,
            seg_patch: 9,
            threshold: 0.5,
            eps_w: 1e-6,
        }
    }
}

impl HoughConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 0.0 {
            return Err(Error::Config("radius must be >= 0".into()));
        }
        if self.sigma < 0.0 {
            return Err(Error::Config("sigma must be >= 0".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config("threshold must lie in (0, 1)".into()));
        }
        if !(self.eps_w > 0.0) {
            return Err(Error::Config("eps_w must be positive".into()));
        }
        if self.seg_patch % 2 == 0 {
            return Err(Error::Config("segmentation patch side must be odd".into()));
        }
        Ok(())
    }
}

/// Accumulated vote weights over the volume grid.
#[derive(Debug, Clone)]
pub struct VoteMap {
    pub dims: [usize; 3],
    pub data: Vec<f32>,
}

impl VoteMap {
    pub fn zeros(dims: [usize; 3]) -> VoteMap {
        VoteMap { dims, data: vec![0.0; dims[0] * dims[1] * dims[2]] }
    }

    pub fn total_mass(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

/// Contour confidence accumulation grid.
#[derive(Debug, Clone)]
pub struct SegMap {
    pub dims: [usize; 3],
    pub data: Vec<f32>,
    pub normalized: bool,
}

impl SegMap {
    pub fn zeros(dims: [usize; 3]) -> SegMap {
        SegMap { dims, data: vec![0.0; dims[0] * dims[1] * dims[2]], normalized: false }
    }

    /// Min-max normalise to [0, 1] (the minimum is 0 by construction).
    pub fn normalize(&mut self) {
        let max = self.data.iter().copied().fold(0f32, f32::max);
        if max > 0.0 {
            for v in &mut self.data {
                *v /= max;
            }
        }
        self.normalized = true;
    }
}

/// One accumulated vote, kept for reprojection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CastVote {
    /// Voxel the patch was classified at.
    pub origin: [i32; 3],
    /// Where the vote landed (origin + stored displacement).
    pub landing: [i32; 3],
    /// Reciprocal feature distance, floored at `eps_w`.
    pub weight: f32,
    /// Database record that produced the vote.
    pub record: u32,
}

/// Foreground voxels of one region with their feature vectors.
pub struct RegionVoxels {
    pub region: u8,
    pub positions: Vec<[i32; 3]>,
    /// Row-major `[voxel][d]`.
    pub features: Vec<f32>,
    pub feature_dim: usize,
}

/// One shared dense pass: classify every interior voxel and gather the
/// positions + features of those whose argmax matches a requested region.
pub fn classify_foreground(
    net: &Network<f32>,
    v: &Volume,
    mode: Mode,
    regions: &[u8],
) -> Result<Vec<RegionVoxels>> {
    let d = net.arch.feature_dim();
    let mut out: Vec<RegionVoxels> = regions
        .iter()
        .map(|&r| RegionVoxels {
            region: r,
            positions: Vec::new(),
            features: Vec::new(),
            feature_dim: d,
        })
        .collect();
    let mut slot = [usize::MAX; 256];
    for (i, &r) in regions.iter().enumerate() {
        slot[r as usize] = i;
    }

    dense_forward_streaming(net, v, mode, true, |slab| {
        let nc = slab.num_classes;
        let [ox, oy] = slab.origin_xy;
        let [dx, dy] = slab.dims_xy;
        let feats = slab.features.expect("features requested");
        for iy in 0..dy {
            for ix in 0..dx {
                let idx = iy * dx + ix;
                let label = argmax_row(&slab.scores[idx * nc..(idx + 1) * nc]);
                let s = slot[label & 0xff];
                if s != usize::MAX {
                    let rv = &mut out[s];
                    rv.positions.push([(ox + ix) as i32, (oy + iy) as i32, slab.z as i32]);
                    rv.features.extend_from_slice(&feats[idx * d..(idx + 1) * d]);
                }
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// Cast votes for classified foreground voxels against a database.
///
/// Every voxel queries its K nearest records; each neighbour adds
/// `1 / max(distance, eps_w)` at `origin + vote`. Landings outside the
/// volume are discarded. Queries run in parallel over fixed-size chunks and
/// accumulate in chunk order, so the result is identical at any worker
/// count.
pub fn cast_votes_from_fields(
    voxels: &RegionVoxels,
    db: &HoughDatabase,
    cfg: &HoughConfig,
    dims: [usize; 3],
) -> (VoteMap, Vec<CastVote>) {
    const CHUNK: usize = 512;
    let d = voxels.feature_dim;
    let chunks: Vec<Vec<CastVote>> = voxels
        .positions
        .par_chunks(CHUNK)
        .zip(voxels.features.par_chunks(CHUNK * d))
        .map(|(ps, fs)| {
            let mut local = Vec::new();
            for (p, f) in ps.iter().zip(fs.chunks_exact(d)) {
                for (rec_idx, dist) in knn_query(db, f, cfg.k, cfg.max_dist) {
                    let rec = &db.records[rec_idx as usize];
                    let landing = [
                        p[0] + rec.vote[0],
                        p[1] + rec.vote[1],
                        p[2] + rec.vote[2],
                    ];
                    let inside = (0..3)
                        .all(|a| landing[a] >= 0 && (landing[a] as usize) < dims[a]);
                    if !inside {
                        continue;
                    }
                    let weight = 1.0 / dist.max(cfg.eps_w);
                    local.push(CastVote { origin: *p, landing, weight, record: rec_idx });
                }
            }
            local
        })
        .collect();

    let mut map = VoteMap::zeros(dims);
    let mut votes = Vec::new();
    for chunk in chunks {
        for cv in &chunk {
            let idx = linear_index(
                dims,
                cv.landing[0] as usize,
                cv.landing[1] as usize,
                cv.landing[2] as usize,
            );
            map.data[idx] += cv.weight;
        }
        votes.extend(chunk);
    }
    (map, votes)
}

/// Full vote-casting stage from a raw volume: one dense classification
/// pass, then K-NN voting for the database's region.
pub fn cast_votes(
    net: &Network<f32>,
    v: &Volume,
    mode: Mode,
    db: &HoughDatabase,
    cfg: &HoughConfig,
) -> Result<(VoteMap, Vec<CastVote>)> {
    cfg.validate()?;
    let classified = classify_foreground(net, v, mode, &[db.region])?;
    Ok(cast_votes_from_fields(&classified[0], db, cfg, v.dims))
}

/// Gaussian-smooth a vote map (separable, kernel truncated at 3 sigma,
/// weights normalised to sum 1, zero padding at the borders). Double
/// precision throughout.
pub fn smooth_votemap(vm: &VoteMap, sigma: f64) -> Vec<f64> {
    let mut cur: Vec<f64> = vm.data.iter().map(|&v| v as f64).collect();
    if sigma <= 0.0 {
        return cur;
    }
    let radius = (3.0 * sigma).floor() as isize;
    if radius == 0 {
        return cur;
    }
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for t in -radius..=radius {
        kernel.push((-((t * t) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }

    let [nx, ny, nz] = vm.dims;
    let mut next = vec![0f64; cur.len()];
    // pass along each axis in turn
    for (axis, n) in [(0usize, nx), (1, ny), (2, nz)] {
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let c = [x as isize, y as isize, z as isize];
                    let mut acc = 0f64;
                    for (ki, w) in kernel.iter().enumerate() {
                        let off = ki as isize - radius;
                        let mut p = c;
                        p[axis] += off;
                        if p[axis] < 0 || p[axis] >= n as isize {
                            continue;
                        }
                        acc += w
                            * cur[linear_index(
                                vm.dims,
                                p[0] as usize,
                                p[1] as usize,
                                p[2] as usize,
                            )];
                    }
                    next[linear_index(vm.dims, x, y, z)] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Smooth and take the global argmax. `None` when the map is identically
/// zero (localisation failure). Ties break toward the lowest linear index.
pub fn localize(vm: &VoteMap, sigma: f64) -> Option<[i32; 3]> {
    if vm.data.iter().all(|&v| v == 0.0) {
        return None;
    }
    let smoothed = smooth_votemap(vm, sigma);
    let mut best = 0usize;
    for (i, &v) in smoothed.iter().enumerate().skip(1) {
        if v > smoothed[best] {
            best = i;
        }
    }
    let [nx, ny, _] = vm.dims;
    Some([
        (best % nx) as i32,
        ((best / nx) % ny) as i32,
        (best / (nx * ny)) as i32,
    ])
}

/// Votes that landed strictly within `radius` of the centroid.
pub fn surviving_votes<'a>(
    votes: &'a [CastVote],
    centroid: [i32; 3],
    radius: f64,
) -> impl Iterator<Item = &'a CastVote> {
    votes.iter().filter(move |cv| {
        let dx = (cv.landing[0] - centroid[0]) as f64;
        let dy = (cv.landing[1] - centroid[1]) as f64;
        let dz = (cv.landing[2] - centroid[2]) as f64;
        (dx * dx + dy * dy + dz * dz).sqrt() < radius
    })
}

/// Re-project surviving votes: each adds `weight * seg_patch` centred at its
/// origin voxel (clipped at the borders), then the map is normalised.
/// `None` when no vote survives (region failure).
pub fn backproject(
    votes: &[CastVote],
    centroid: [i32; 3],
    db: &HoughDatabase,
    cfg: &HoughConfig,
    label_volumes: Option<&[LabelVolume]>,
    dims: [usize; 3],
) -> Result<Option<SegMap>> {
    let mut map = SegMap::zeros(dims);
    let mut survivors = 0usize;
    let side = db.seg_patch_side as usize;
    let h = side as i32 / 2;
    for cv in surviving_votes(votes, centroid, cfg.radius) {
        survivors += 1;
        let mask = fetch_seg_mask(db, &db.records[cv.record as usize], label_volumes)?;
        let mut i = 0;
        for dz in -h..=h {
            for dy in -h..=h {
                for dx in -h..=h {
                    if mask.get(i) {
                        let x = cv.origin[0] + dx;
                        let y = cv.origin[1] + dy;
                        let z = cv.origin[2] + dz;
                        if x >= 0
                            && y >= 0
                            && z >= 0
                            && (x as usize) < dims[0]
                            && (y as usize) < dims[1]
                            && (z as usize) < dims[2]
                        {
                            map.data
                                [linear_index(dims, x as usize, y as usize, z as usize)] +=
                                cv.weight;
                        }
                    }
                    i += 1;
                }
            }
        }
    }
    if survivors == 0 {
        return Ok(None);
    }
    map.normalize();
    Ok(Some(map))
}

/// Binary mask of voxels at or above the threshold.
pub fn threshold_segmentation(sm: &SegMap, threshold: f32) -> Mask {
    debug_assert!(sm.normalized);
    Mask {
        dims: sm.dims,
        data: sm.data.iter().map(|&v| v >= threshold).collect(),
    }
}

/// Per-region outcome of the pipeline.
#[derive(Debug, Clone)]
pub struct RegionOutcome {
    pub region: u8,
    pub success: bool,
    pub centroid: Option<[i32; 3]>,
    pub survivors: usize,
    pub mask_voxels: usize,
}

impl RegionOutcome {
    fn failed(region: u8) -> RegionOutcome {
        RegionOutcome { region, success: false, centroid: None, survivors: 0, mask_voxels: 0 }
    }

    /// CSV row: region, success, centroid (3 ints, -1 on failure),
    /// surviving votes, mask voxel count.
    pub fn csv_row(&self) -> String {
        let c = self.centroid.unwrap_or([-1, -1, -1]);
        format!(
            "{},{},{},{},{},{},{}",
            self.region, self.success as u8, c[0], c[1], c[2], self.survivors, self.mask_voxels
        )
    }
}

/// Segment every region with one shared classification pass.
///
/// Overlapping region masks resolve to the higher segmentation-map
/// confidence (earlier database on ties). Per-region failures are reported,
/// never fatal.
pub fn segment_all_regions(
    net: &Network<f32>,
    v: &Volume,
    mode: Mode,
    dbs: &[&HoughDatabase],
    label_volumes: &[Option<&[LabelVolume]>],
    cfg: &HoughConfig,
) -> Result<(LabelVolume, Vec<RegionOutcome>)> {
    cfg.validate()?;
    if dbs.len() != label_volumes.len() {
        return Err(Error::Config("one label-volume source per database required".into()));
    }
    let regions: Vec<u8> = dbs.iter().map(|db| db.region).collect();
    let classified = classify_foreground(net, v, mode, &regions)?;

    let mut labels = LabelVolume::zeros(v.dims);
    labels.spacing = v.spacing;
    let mut confidence = vec![0f32; labels.labels.len()];
    let mut outcomes = Vec::with_capacity(dbs.len());

    for ((db, voxels), source) in dbs.iter().zip(&classified).zip(label_volumes) {
        let (vm, votes) = cast_votes_from_fields(voxels, db, cfg, v.dims);
        let Some(centroid) = localize(&vm, cfg.sigma) else {
            outcomes.push(RegionOutcome::failed(db.region));
            continue;
        };
        let Some(segmap) = backproject(&votes, centroid, db, cfg, *source, v.dims)? else {
            outcomes.push(RegionOutcome {
                centroid: Some(centroid),
                ..RegionOutcome::failed(db.region)
            });
            continue;
        };
        let survivors = surviving_votes(&votes, centroid, cfg.radius).count();
        let mask = threshold_segmentation(&segmap, cfg.threshold);
        let mut mask_voxels = 0usize;
        for (i, &m) in mask.data.iter().enumerate() {
            if m {
                mask_voxels += 1;
                if segmap.data[i] > confidence[i] {
                    confidence[i] = segmap.data[i];
                    labels.labels[i] = db.region;
                }
            }
        }
        outcomes.push(RegionOutcome {
            region: db.region,
            success: mask_voxels > 0,
            centroid: Some(centroid),
            survivors,
            mask_voxels,
        });
    }
    Ok((labels, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::houghdb::{HoughDatabase, HoughRecord, KnnEngine, SegMask, SegRef};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic_db(n: usize, d: usize, dims: [usize; 3], seed: u64) -> HoughDatabase {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records: Vec<HoughRecord> = (0..n)
            .map(|_| {
                let feature: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
                let vote = [
                    rng.gen_range(-(dims[0] as i32) / 3..dims[0] as i32 / 3),
                    rng.gen_range(-(dims[1] as i32) / 3..dims[1] as i32 / 3),
                    rng.gen_range(-(dims[2] as i32) / 3..dims[2] as i32 / 3),
                ];
                let mut mask = SegMask::zeros(9);
                for i in 0..729 {
                    mask.set(i, rng.gen_bool(0.4));
                }
                HoughRecord { feature, vote, seg_ref: SegRef::Inline(mask) }
            })
            .collect();
        HoughDatabase::from_records(1, d, 9, true, vec![], records, KnnEngine::Auto)
    }

    fn synthetic_voxels(n: usize, d: usize, dims: [usize; 3], seed: u64) -> RegionVoxels {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut positions = Vec::new();
        let mut features = Vec::new();
        for _ in 0..n {
            positions.push([
                rng.gen_range(0..dims[0] as i32),
                rng.gen_range(0..dims[1] as i32),
                rng.gen_range(0..dims[2] as i32),
            ]);
            features.extend((0..d).map(|_| rng.gen_range(-1.0f32..1.0)));
        }
        RegionVoxels { region: 1, positions, features, feature_dim: d }
    }

    #[test]
    fn single_neighbour_contributes_reciprocal_weight() {
        // one fg voxel, one record at feature distance 2 -> weight 0.5
        let d = 4;
        let rec = HoughRecord {
            feature: vec![2.0, 0.0, 0.0, 0.0],
            vote: [1, 2, 3],
            seg_ref: SegRef::Inline(SegMask::zeros(9)),
        };
        let db = HoughDatabase::from_records(1, d, 9, true, vec![], vec![rec], KnnEngine::Auto);
        let voxels = RegionVoxels {
            region: 1,
            positions: vec![[5, 5, 5]],
            features: vec![0.0, 0.0, 0.0, 0.0],
            feature_dim: d,
        };
        let cfg = HoughConfig::default();
        let (vm, votes) = cast_votes_from_fields(&voxels, &db, &cfg, [16, 16, 16]);
        assert_eq!(votes.len(), 1);
        assert_eq!(votes[0].landing, [6, 7, 8]);
        assert!((votes[0].weight - 0.5).abs() < 1e-6);
        assert!((vm.data[linear_index([16, 16, 16], 6, 7, 8)] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn empty_votes_mean_localisation_failure() {
        let vm = VoteMap::zeros([8, 8, 8]);
        assert_eq!(localize(&vm, 1.0), None);
    }

    #[test]
    fn spike_localises_at_itself() {
        let mut vm = VoteMap::zeros([12, 12, 12]);
        vm.data[linear_index([12, 12, 12], 5, 5, 5)] = 1.0;
        assert_eq!(localize(&vm, 1.0), Some([5, 5, 5]));
    }

    #[test]
    fn heavier_spike_wins() {
        let mut vm = VoteMap::zeros([24, 8, 8]);
        vm.data[linear_index([24, 8, 8], 4, 4, 4)] = 0.9;
        vm.data[linear_index([24, 8, 8], 14, 4, 4)] = 1.0;
        assert_eq!(localize(&vm, 1.0), Some([14, 4, 4]));
    }

    #[test]
    fn smoothing_matches_direct_convolution_oracle() {
        let dims = [10, 9, 8];
        let mut vm = VoteMap::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let i = rng.gen_range(0..vm.data.len());
            vm.data[i] += rng.gen_range(0.0..2.0f32);
        }
        let sigma = 1.0;
        let fast = smooth_votemap(&vm, sigma);

        // direct dense 3D convolution with the same truncated kernel
        let radius = 3i32;
        let mut kernel = Vec::new();
        for t in -radius..=radius {
            kernel.push((-(t * t) as f64 / (2.0 * sigma * sigma)).exp());
        }
        let norm: f64 = kernel.iter().sum();
        let k1 = |t: i32| kernel[(t + radius) as usize] / norm;
        let mut slow = vec![0f64; vm.data.len()];
        for z in 0..dims[2] as i32 {
            for y in 0..dims[1] as i32 {
                for x in 0..dims[0] as i32 {
                    let mut acc = 0f64;
                    for dz in -radius..=radius {
                        for dy in -radius..=radius {
                            for dx in -radius..=radius {
                                let (sx, sy, sz) = (x + dx, y + dy, z + dz);
                                if sx < 0
                                    || sy < 0
                                    || sz < 0
                                    || sx >= dims[0] as i32
                                    || sy >= dims[1] as i32
                                    || sz >= dims[2] as i32
                                {
                                    continue;
                                }
                                acc += k1(dx)
                                    * k1(dy)
                                    * k1(dz)
                                    * vm.data[linear_index(
                                        dims,
                                        sx as usize,
                                        sy as usize,
                                        sz as usize,
                                    )] as f64;
                            }
                        }
                    }
                    slow[linear_index(dims, x as usize, y as usize, z as usize)] = acc;
                }
            }
        }
        let mut max_diff = 0f64;
        for (a, b) in fast.iter().zip(&slow) {
            max_diff = max_diff.max((a - b).abs());
        }
        assert!(max_diff < 1e-12, "separable vs direct: {max_diff}");
        // argmax agrees
        let am = |v: &[f64]| {
            v.iter().enumerate().fold((0usize, f64::MIN), |acc, (i, &x)| {
                if x > acc.1 {
                    (i, x)
                } else {
                    acc
                }
            })
        };
        assert_eq!(am(&fast).0, am(&slow).0);
    }

    #[test]
    fn vote_mass_is_conserved() {
        let dims = [20, 20, 20];
        let db = synthetic_db(50, 8, dims, 1);
        let voxels = synthetic_voxels(200, 8, dims, 2);
        let cfg = HoughConfig::default();
        let (vm, votes) = cast_votes_from_fields(&voxels, &db, &cfg, dims);
        let mass: f64 = votes.iter().map(|v| v.weight as f64).sum();
        assert!((vm.total_mass() - mass).abs() < 1e-3 * mass.max(1.0));
    }

    #[test]
    fn single_all_ones_patch_normalises_to_one() {
        let dims = [16, 16, 16];
        let mut mask = SegMask::zeros(9);
        for i in 0..729 {
            mask.set(i, true);
        }
        let rec = HoughRecord {
            feature: vec![0.0; 4],
            vote: [0, 0, 0],
            seg_ref: SegRef::Inline(mask),
        };
        let db = HoughDatabase::from_records(1, 4, 9, true, vec![], vec![rec], KnnEngine::Auto);
        let votes = vec![CastVote {
            origin: [8, 8, 8],
            landing: [8, 8, 8],
            weight: 0.7,
            record: 0,
        }];
        let cfg = HoughConfig::default();
        let sm = backproject(&votes, [8, 8, 8], &db, &cfg, None, dims).unwrap().unwrap();
        assert!(sm.normalized);
        // constant weight inside the 9x9x9 footprint, 1.0 after normalisation
        for dz in -4i32..=4 {
            for dy in -4i32..=4 {
                for dx in -4i32..=4 {
                    let idx = linear_index(
                        dims,
                        (8 + dx) as usize,
                        (8 + dy) as usize,
                        (8 + dz) as usize,
                    );
                    assert_eq!(sm.data[idx], 1.0);
                }
            }
        }
        assert_eq!(sm.data.iter().filter(|&&v| v > 0.0).count(), 729);
    }

    #[test]
    fn zero_radius_kills_all_survivors() {
        let dims = [16, 16, 16];
        let db = synthetic_db(10, 4, dims, 3);
        let votes = vec![CastVote {
            origin: [8, 8, 8],
            landing: [8, 8, 8],
            weight: 1.0,
            record: 0,
        }];
        let cfg = HoughConfig { radius: 0.0, ..HoughConfig::default() };
        // strict inequality: even a dead-center landing does not survive r=0
        let sm = backproject(&votes, [8, 8, 8], &db, &cfg, None, dims).unwrap();
        assert!(sm.is_none());
    }

    #[test]
    fn threshold_monotone_and_edge_cases() {
        let mut sm = SegMap::zeros([4, 4, 4]);
        sm.data[0] = 1.0;
        sm.data[1] = 0.5;
        sm.data[2] = 0.49;
        sm.normalized = true;
        let lo = threshold_segmentation(&sm, 0.5);
        assert_eq!(lo.data.iter().filter(|&&m| m).count(), 2);
        // raising the threshold never grows the mask
        let hi = threshold_segmentation(&sm, 0.9);
        for (l, h) in lo.data.iter().zip(&hi.data) {
            assert!(*l || !*h);
        }
        let all_zero = SegMap { normalized: true, ..SegMap::zeros([4, 4, 4]) };
        let empty = threshold_segmentation(&all_zero, 0.5);
        assert!(empty.data.iter().all(|&m| !m));
    }

    #[test]
    fn survivor_filter_is_idempotent() {
        // removing votes with landing >= r away never changes the mask
        let dims = [20, 20, 20];
        let db = synthetic_db(40, 8, dims, 5);
        let voxels = synthetic_voxels(150, 8, dims, 6);
        let cfg = HoughConfig::default();
        let (vm, votes) = cast_votes_from_fields(&voxels, &db, &cfg, dims);
        let c = localize(&vm, cfg.sigma).unwrap();
        let all = backproject(&votes, c, &db, &cfg, None, dims).unwrap();
        let kept: Vec<CastVote> =
            surviving_votes(&votes, c, cfg.radius).copied().collect();
        let filtered = backproject(&kept, c, &db, &cfg, None, dims).unwrap();
        match (all, filtered) {
            (Some(a), Some(b)) => {
                let ma = threshold_segmentation(&a, cfg.threshold);
                let mb = threshold_segmentation(&b, cfg.threshold);
                assert_eq!(ma.data, mb.data);
            }
            (None, None) => {}
            _ => panic!("filtering changed the failure status"),
        }
    }

    #[test]
    fn feature_scaling_leaves_localisation_invariant() {
        // scaling db + query features by gamma scales weights by 1/gamma but
        // keeps ordering, landings, and hence the argmax (max_dist scaled too)
        let dims = [20, 20, 20];
        let gamma = 3.5f32;
        let base_db = synthetic_db(60, 8, dims, 7);
        let voxels = synthetic_voxels(100, 8, dims, 8);
        let cfg = HoughConfig { max_dist: 2.0, ..HoughConfig::default() };

        let scaled_records: Vec<HoughRecord> = base_db
            .records
            .iter()
            .map(|r| HoughRecord {
                feature: r.feature.iter().map(|&f| f * gamma).collect(),
                vote: r.vote,
                seg_ref: r.seg_ref.clone(),
            })
            .collect();
        let scaled_db = HoughDatabase::from_records(
            1, 8, 9, true, vec![], scaled_records, KnnEngine::Auto,
        );
        let scaled_voxels = RegionVoxels {
            region: 1,
            positions: voxels.positions.clone(),
            features: voxels.features.iter().map(|&f| f * gamma).collect(),
            feature_dim: 8,
        };
        let scaled_cfg = HoughConfig { max_dist: 2.0 * gamma, ..cfg.clone() };

        let (vm_a, votes_a) = cast_votes_from_fields(&voxels, &base_db, &cfg, dims);
        let (vm_b, votes_b) =
            cast_votes_from_fields(&scaled_voxels, &scaled_db, &scaled_cfg, dims);
        assert_eq!(votes_a.len(), votes_b.len());
        for (a, b) in votes_a.iter().zip(&votes_b) {
            assert_eq!(a.record, b.record);
            assert_eq!(a.landing, b.landing);
            assert!((a.weight - b.weight * gamma).abs() / a.weight < 2e-4);
        }
        assert_eq!(localize(&vm_a, cfg.sigma), localize(&vm_b, cfg.sigma));
    }

    fn trained_toy() -> (crate::net::Network<f32>, Volume, LabelVolume, HoughDatabase) {
        use crate::net::{parse_arch, train, Network, TrainConfig};
        use crate::patch::sample_training_set;
        // one bright slab of label 1 in a dim background
        let dims = [22, 22, 10];
        let mut v = Volume::zeros(dims);
        let mut l = LabelVolume::zeros(dims);
        for z in 3..7 {
            for y in 8..15 {
                for x in 8..15 {
                    l.labels[linear_index(dims, x, y, z)] = 1;
                    v.data[linear_index(dims, x, y, z)] = 1.0;
                }
            }
        }
        let arch = parse_arch("i7 c3x4 f8", 2, 1, 3).unwrap();
        let mut net: Network<f32> = Network::init_msra(&arch, 2).unwrap();
        let ts = sample_training_set(&v, &l, &[0, 1], 80, Mode::TwoD, 7, 3).unwrap();
        let cfg = TrainConfig { epochs: 8, batch_size: 16, seed: 3, ..TrainConfig::default() };
        train(&mut net, &ts, &cfg, None).unwrap();
        let db =
            crate::houghdb::build_database(&net, &[(&v, &l)], 1, Mode::TwoD, 1, true, vec![])
                .unwrap();
        (net, v, l, db)
    }

    #[test]
    fn multi_region_reduces_to_single_region_pipeline() {
        let (net, v, _l, db) = trained_toy();
        let cfg = HoughConfig::default();
        let (labels, outcomes) =
            segment_all_regions(&net, &v, Mode::TwoD, &[&db], &[None], &cfg).unwrap();
        assert_eq!(outcomes.len(), 1);
        assert!(outcomes[0].success);

        // the hand-run single-region pipeline produces the same mask
        let (vm, votes) = cast_votes(&net, &v, Mode::TwoD, &db, &cfg).unwrap();
        let c = localize(&vm, cfg.sigma).unwrap();
        assert_eq!(Some(c), outcomes[0].centroid);
        let sm = backproject(&votes, c, &db, &cfg, None, v.dims).unwrap().unwrap();
        let mask = threshold_segmentation(&sm, cfg.threshold);
        for (i, &m) in mask.data.iter().enumerate() {
            assert_eq!(m, labels.labels[i] == 1);
        }
    }

    #[test]
    fn absent_region_fails_without_affecting_others() {
        let (net, v, _l, db1) = trained_toy();
        // a database for class 7, which the 3-class network never predicts
        let mut db7 = synthetic_db(10, db1.feature_dim, v.dims, 9);
        db7.region = 7;
        let cfg = HoughConfig::default();
        let (_, outcomes) =
            segment_all_regions(&net, &v, Mode::TwoD, &[&db1, &db7], &[None, None], &cfg)
                .unwrap();
        assert!(outcomes[0].success);
        assert!(!outcomes[1].success);
        assert_eq!(outcomes[1].centroid, None);
        // the present region localises on the slab centroid
        let c = outcomes[0].centroid.unwrap();
        assert!((c[0] - 11).abs() <= 2 && (c[1] - 11).abs() <= 2 && (c[2] - 4).abs() <= 2);
    }

    #[test]
    fn parallel_casting_is_thread_count_invariant() {
        let dims = [20, 20, 20];
        let db = synthetic_db(50, 8, dims, 11);
        let voxels = synthetic_voxels(700, 8, dims, 12);
        let cfg = HoughConfig::default();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| cast_votes_from_fields(&voxels, &db, &cfg, dims))
        };
        let (vm1, votes1) = run(1);
        let (vm4, votes4) = run(4);
        assert_eq!(votes1, votes4);
        assert_eq!(vm1.data, vm4.data, "bitwise identical at any worker count");
    }
}
