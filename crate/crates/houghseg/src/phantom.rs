//! Deterministic synthetic volume generation: superellipsoid regions over a
//! textured background, with speckle, additive noise and signal-dropout
//! artifacts. Labels come from the analytic shapes and are never touched by
//! intensity corruption.
//!
//! All randomness is counter-based (hashed from the seed and voxel/lattice
//! coordinates), so generation is bitwise reproducible and order-independent.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::volume::{LabelVolume, Volume};
use crate::{Error, Result};

/// `|x/a|^n + |y/b|^n + |z/c|^n <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperEllipsoid {
    pub center: [f64; 3],
    pub radii: [f64; 3],
    pub exponent: f64,
}

impl SuperEllipsoid {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let mut s = 0f64;
        for a in 0..3 {
            let t = ((p[a] - self.center[a]) / self.radii[a]).abs();
            s += t.powf(self.exponent);
        }
        s <= 1.0
    }
}

/// One labelled region: shape and interior intensity (its contrast is the
/// difference to the spec's background level).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub id: u8,
    pub shape: SuperEllipsoid,
    pub intensity: f32,
}

/// Signal-dropout zones; they scale intensity by `1 - attenuation`.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    /// Axis-aligned slab: voxels with `min <= coord[axis] <= max`.
    Slab { axis: usize, min: f64, max: f64, attenuation: f32 },
    /// Cone from `apex` opening along `axis` with the given half-angle.
    Cone { apex: [f64; 3], axis: [f64; 3], half_angle_deg: f64, attenuation: f32 },
}

impl Artifact {
    fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Artifact::Slab { axis, min, max, .. } => p[*axis] >= *min && p[*axis] <= *max,
            Artifact::Cone { apex, axis, half_angle_deg, .. } => {
                let w = [p[0] - apex[0], p[1] - apex[1], p[2] - apex[2]];
                let an = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
                if an == 0.0 {
                    return false;
                }
                let proj = (w[0] * axis[0] + w[1] * axis[1] + w[2] * axis[2]) / an;
                if proj <= 0.0 {
                    return false;
                }
                let wn = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
                proj / wn >= half_angle_deg.to_radians().cos()
            }
        }
    }

    fn attenuation(&self) -> f32 {
        match self {
            Artifact::Slab { attenuation, .. } | Artifact::Cone { attenuation, .. } => {
                *attenuation
            }
        }
    }
}

/// Full description of one phantom.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub background: f32,
    /// Additive Gaussian noise sigma.
    pub noise_sigma: f32,
    /// Multiplicative speckle strength.
    pub speckle: f32,
    /// Value-noise lattice cell size in voxels.
    pub texture_scale: f64,
    pub texture_amp: f32,
    /// Linear intensity bias field (slope per voxel along each axis), the
    /// kind scanners exhibit as B1 inhomogeneity. It shifts region and
    /// background equally, so contrast is preserved while absolute patch
    /// levels become position-dependent.
    pub bias_gradient: [f64; 3],
    pub regions: Vec<RegionSpec>,
    pub artifacts: Vec<Artifact>,
    pub seed: u64,
}

impl PhantomSpec {
    /// Two textured superellipsoid regions in an 80-cube; sized so any of
    /// the built-in networks trains on a desktop CPU within minutes, and so
    /// the regions are large against the 9-sided segmentation patches (tiny
    /// regions leave the back-projected confidence map without a plateau
    /// and the fixed 0.5 threshold then bites into them).
    pub fn desk_default() -> PhantomSpec {
        PhantomSpec {
            dims: [80, 80, 80],
            background: 0.15,
            noise_sigma: 0.04,
            speckle: 0.10,
            texture_scale: 4.0,
            texture_amp: 0.22,
            bias_gradient: [0.001, 0.001, 0.010],
            regions: vec![
                RegionSpec {
                    id: 1,
                    shape: SuperEllipsoid {
                        center: [31.0, 31.0, 31.0],
                        radii: [10.5, 10.0, 9.5],
                        exponent: 2.2,
                    },
                    intensity: 1.0,
                },
                RegionSpec {
                    id: 2,
                    shape: SuperEllipsoid {
                        center: [48.0, 46.0, 44.0],
                        radii: [9.5, 10.0, 10.5],
                        exponent: 3.0,
                    },
                    intensity: 0.55,
                },
            ],
            artifacts: Vec::new(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("phantom dims must be positive".into()));
        }
        let mut seen = [false; 256];
        for r in &self.regions {
            if r.id == 0 {
                return Err(Error::Config("region id 0 is reserved for background".into()));
            }
            if seen[r.id as usize] {
                return Err(Error::Config(format!("duplicate region id {}", r.id)));
            }
            seen[r.id as usize] = true;
            for a in 0..3 {
                if !(r.shape.radii[a] > 0.0) {
                    return Err(Error::Config(format!("region {}: bad radii", r.id)));
                }
                let lo = r.shape.center[a] - r.shape.radii[a];
                let hi = r.shape.center[a] + r.shape.radii[a];
                if lo < 0.0 || hi > (self.dims[a] - 1) as f64 {
                    return Err(Error::Config(format!(
                        "region {} exceeds the volume along axis {a} ([{lo:.1}, {hi:.1}] vs \
                         [0, {}])",
                        r.id,
                        self.dims[a] - 1
                    )));
                }
            }
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn hash4(seed: u64, a: i64, b: i64, c: i64, tag: u64) -> u64 {
    let mut h = splitmix64(seed ^ tag.wrapping_mul(0xA24BAED4963EE407));
    h = splitmix64(h ^ (a as u64).wrapping_mul(0x9FB21C651E98DF25));
    h = splitmix64(h ^ (b as u64).wrapping_mul(0xD6E8FEB86659FD93));
    h = splitmix64(h ^ (c as u64));
    h
}

fn unit01(h: u64) -> f64 {
    // 53 high bits into (0, 1]
    (((h >> 11) as f64) + 1.0) / ((1u64 << 53) as f64)
}

/// Standard normal from one hash via Box-Muller.
fn gauss(h: u64) -> f64 {
    let u1 = unit01(h);
    let u2 = unit01(splitmix64(h));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

const TAG_TEXTURE: u64 = 1;
const TAG_SPECKLE: u64 = 2;
const TAG_NOISE: u64 = 3;

/// Band-limited value noise in [-1, 1]: random lattice values, trilinear
/// interpolation.
fn value_noise(seed: u64, p: [f64; 3], scale: f64) -> f64 {
    let q = [p[0] / scale, p[1] / scale, p[2] / scale];
    let g = [q[0].floor(), q[1].floor(), q[2].floor()];
    let f = [q[0] - g[0], q[1] - g[1], q[2] - g[2]];
    let mut acc = 0f64;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let h = hash4(
                    seed,
                    g[0] as i64 + dx as i64,
                    g[1] as i64 + dy as i64,
                    g[2] as i64 + dz as i64,
                    TAG_TEXTURE,
                );
                let v = unit01(h) * 2.0 - 1.0;
                let w = (if dx == 0 { 1.0 - f[0] } else { f[0] })
                    * (if dy == 0 { 1.0 - f[1] } else { f[1] })
                    * (if dz == 0 { 1.0 - f[2] } else { f[2] });
                acc += v * w;
            }
        }
    }
    acc
}

/// Generate one phantom: image and exact labels.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(Volume, LabelVolume)> {
    spec.validate()?;
    let [nx, ny, nz] = spec.dims;
    let n = nx * ny * nz;
    let mut data = vec![0f32; n];
    let mut labels = vec![0u8; n];

    let plane = nx * ny;
    data.par_chunks_mut(plane)
        .zip(labels.par_chunks_mut(plane))
        .enumerate()
        .for_each(|(z, (dslab, lslab))| {
            for y in 0..ny {
                for x in 0..nx {
                    let i = y * nx + x;
                    let p = [x as f64, y as f64, z as f64];
                    let mut label = 0u8;
                    let mut base = spec.background;
                    for r in &spec.regions {
                        if r.shape.contains(p) {
                            label = r.id;
                            base = r.intensity;
                        }
                    }
                    lslab[i] = label;

                    let mut value = base as f64
                        + spec.bias_gradient[0] * p[0]
                        + spec.bias_gradient[1] * p[1]
                        + spec.bias_gradient[2] * p[2];
                    if spec.texture_amp != 0.0 {
                        value += spec.texture_amp as f64
                            * value_noise(spec.seed, p, spec.texture_scale);
                    }
                    if spec.speckle != 0.0 {
                        let g =
                            gauss(hash4(spec.seed, x as i64, y as i64, z as i64, TAG_SPECKLE));
                        value *= 1.0 + spec.speckle as f64 * g;
                    }
                    for art in &spec.artifacts {
                        if art.contains(p) {
                            value *= 1.0 - art.attenuation() as f64;
                        }
                    }
                    if spec.noise_sigma != 0.0 {
                        let g = gauss(hash4(spec.seed, x as i64, y as i64, z as i64, TAG_NOISE));
                        value += spec.noise_sigma as f64 * g;
                    }
                    dslab[i] = value as f32;
                }
            }
        });

    Ok((
        Volume { dims: spec.dims, spacing: [1.0; 3], data },
        LabelVolume { dims: spec.dims, spacing: [1.0; 3], labels },
    ))
}

/// Jitter centers, radii and intensities of the base spec.
///
/// Phantom `i` uses seed `base.seed + i` (so `n = 1, jitter = 0` reproduces
/// `generate_phantom(base)` exactly); the cohort `seed` drives the jitter
/// draws only. Center jitter is `Normal(0, jitter)` voxels per axis, radii
/// jitter a quarter of that, intensity jitter 0.004 of it.
pub fn jittered_spec(base: &PhantomSpec, i: u64, jitter: f64, seed: u64) -> PhantomSpec {
    let mut spec = base.clone();
    spec.seed = base.seed.wrapping_add(i);
    if jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i + 1);
        for r in &mut spec.regions {
            for a in 0..3 {
                r.shape.center[a] += jitter * gauss_from(&mut rng);
            }
            for a in 0..3 {
                r.shape.radii[a] = (r.shape.radii[a] + 0.25 * jitter * gauss_from(&mut rng))
                    .max(1.0);
            }
            r.intensity += (0.004 * jitter * gauss_from(&mut rng)) as f32;
        }
    }
    spec
}

fn gauss_from(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..=1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A cohort of jittered phantoms, generated in parallel but bitwise
/// deterministic. Fails if jitter pushes any region out of bounds.
pub fn generate_cohort(
    base: &PhantomSpec,
    n: usize,
    jitter: f64,
    seed: u64,
) -> Result<Vec<(Volume, LabelVolume)>> {
    if n == 0 {
        return Err(Error::Config("cohort size must be >= 1".into()));
    }
    let specs: Vec<PhantomSpec> =
        (0..n).map(|i| jittered_spec(base, i as u64, jitter, seed)).collect();
    specs.par_iter().map(generate_phantom).collect()
}

/// Parse a flat `key = value` phantom spec file. Repeated `region` and
/// `artifact` keys accumulate; `#` starts a comment.
///
/// ```text
/// dims = 64 64 64
/// seed = 7
/// background = 0.15
/// noise_sigma = 0.03
/// speckle = 0.06
/// texture_scale = 5
/// texture_amp = 0.06
/// region = 1  26 28 30  7.5 8 7  2.2  1.0   # id center radii exponent intensity
/// artifact = slab z 24 32 0.85
/// artifact = cone 32 32 0  0 0 1  15 0.8
/// ```
pub fn parse_phantom_spec(text: &str) -> Result<PhantomSpec> {
    let mut spec = PhantomSpec {
        dims: [64, 64, 64],
        background: 0.0,
        noise_sigma: 0.0,
        speckle: 0.0,
        texture_scale: 5.0,
        texture_amp: 0.0,
        bias_gradient: [0.0; 3],
        regions: Vec::new(),
        artifacts: Vec::new(),
        seed: 0,
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Format(format!("phantom spec line {}: expected `key = value`", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let nums = || -> Result<Vec<f64>> {
            value
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad number `{t}` in `{key}`")))
                })
                .collect()
        };
        match key {
            "dims" => {
                let v = nums()?;
                if v.len() != 3 {
                    return Err(Error::Format("dims needs three values".into()));
                }
                spec.dims = [v[0] as usize, v[1] as usize, v[2] as usize];
            }
            "seed" => {
                spec.seed = value
                    .parse()
                    .map_err(|_| Error::Format(format!("bad seed `{value}`")))?
            }
            "background" => spec.background = nums()?[0] as f32,
            "noise_sigma" => spec.noise_sigma = nums()?[0] as f32,
            "speckle" => spec.speckle = nums()?[0] as f32,
            "texture_scale" => spec.texture_scale = nums()?[0],
            "texture_amp" => spec.texture_amp = nums()?[0] as f32,
            "bias_gradient" => {
                let v = nums()?;
                if v.len() != 3 {
                    return Err(Error::Format("bias_gradient needs three values".into()));
                }
                spec.bias_gradient = [v[0], v[1], v[2]];
            }
            "region" => {
                let v = nums()?;
                if v.len() != 9 {
                    return Err(Error::Format(
                        "region needs: id cx cy cz rx ry rz exponent intensity".into(),
                    ));
                }
                spec.regions.push(RegionSpec {
                    id: v[0] as u8,
                    shape: SuperEllipsoid {
                        center: [v[1], v[2], v[3]],
                        radii: [v[4], v[5], v[6]],
                        exponent: v[7],
                    },
                    intensity: v[8] as f32,
                });
            }
            "artifact" => {
                let mut parts = value.split_whitespace();
                let kind = parts.next().unwrap_or("");
                let rest: Vec<f64> = parts
                    .map(|t| {
                        t.parse::<f64>().or_else(|_| match t {
                            "x" => Ok(0.0),
                            "y" => Ok(1.0),
                            "z" => Ok(2.0),
                            _ => Err(Error::Format(format!("bad artifact token `{t}`"))),
                        })
                    })
                    .collect::<Result<_>>()?;
                match kind {
                    "slab" => {
                        if rest.len() != 4 {
                            return Err(Error::Format(
                                "slab artifact needs: axis min max attenuation".into(),
                            ));
                        }
                        spec.artifacts.push(Artifact::Slab {
                            axis: rest[0] as usize,
                            min: rest[1],
                            max: rest[2],
                            attenuation: rest[3] as f32,
                        });
                    }
                    "cone" => {
                        if rest.len() != 8 {
                            return Err(Error::Format(
                                "cone artifact needs: apex(3) axis(3) half_angle attenuation"
                                    .into(),
                            ));
                        }
                        spec.artifacts.push(Artifact::Cone {
                            apex: [rest[0], rest[1], rest[2]],
                            axis: [rest[3], rest[4], rest[5]],
                            half_angle_deg: rest[6],
                            attenuation: rest[7] as f32,
                        });
                    }
                    other => {
                        return Err(Error::Format(format!("unknown artifact kind `{other}`")))
                    }
                }
            }
            other => return Err(Error::Format(format!("unknown phantom spec key `{other}`"))),
        }
    }
    if spec.regions.is_empty() {
        return Err(Error::Format("phantom spec defines no regions".into()));
    }
    spec.validate()?;
    Ok(spec)
}
