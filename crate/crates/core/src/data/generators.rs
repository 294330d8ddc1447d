use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::array::RealArray;
use crate::error::{Error, Result};

use super::Dataset;

/// Sine samples are drawn with `t ∈ [−1, 1]`.
pub const SINE_INTERVAL: (f64, f64) = (-1.0, 1.0);
/// Circle samples cover the open arc `θ ∈ (−0.9π, 0.9π)`.
pub const CIRCLE_ARC: (f64, f64) = (-0.9 * PI, 0.9 * PI);
/// Height of the curved-sheet embedding `(u, v, h·sin u·cos v)`.
pub const SHEET_HEIGHT: f64 = 0.5;

/// A generator with its parameters; together with a seed this fully
/// determines a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GeneratorSpec {
    Sine {
        n: usize,
        amplitude: f64,
        frequency: f64,
        noise_std: f64,
    },
    SquareWithHole {
        n: usize,
        outer_side: f64,
        hole_side: f64,
        embed_noise: f64,
    },
    Circle {
        n: usize,
        radius: f64,
        noise_std: f64,
    },
}

impl GeneratorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorSpec::Sine { .. } => "sine",
            GeneratorSpec::SquareWithHole { .. } => "square-hole",
            GeneratorSpec::Circle { .. } => "circle",
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        match *self {
            GeneratorSpec::Sine {
                n,
                amplitude,
                frequency,
                noise_std,
            } => gen_sine_curve(n, amplitude, frequency, noise_std, seed),
            GeneratorSpec::SquareWithHole {
                n,
                outer_side,
                hole_side,
                embed_noise,
            } => gen_square_with_hole(n, outer_side, hole_side, embed_noise, seed),
            GeneratorSpec::Circle {
                n,
                radius,
                noise_std,
            } => gen_circle(n, radius, noise_std, seed),
        }
    }

    /// The same generator with noise switched off.
    pub fn noise_free(&self) -> GeneratorSpec {
        let mut s = *self;
        match &mut s {
            GeneratorSpec::Sine { noise_std, .. } | GeneratorSpec::Circle { noise_std, .. } => {
                *noise_std = 0.0
            }
            GeneratorSpec::SquareWithHole { embed_noise, .. } => *embed_noise = 0.0,
        }
        s
    }

    pub fn with_n(&self, count: usize) -> GeneratorSpec {
        let mut s = *self;
        match &mut s {
            GeneratorSpec::Sine { n, .. }
            | GeneratorSpec::Circle { n, .. }
            | GeneratorSpec::SquareWithHole { n, .. } => *n = count,
        }
        s
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            GeneratorSpec::Sine {
                n,
                amplitude,
                frequency,
                noise_std,
            } => vec![
                ("n", n as f64),
                ("amplitude", amplitude),
                ("frequency", frequency),
                ("noise_std", noise_std),
            ],
            GeneratorSpec::SquareWithHole {
                n,
                outer_side,
                hole_side,
                embed_noise,
            } => vec![
                ("n", n as f64),
                ("outer_side", outer_side),
                ("hole_side", hole_side),
                ("embed_noise", embed_noise),
            ],
            GeneratorSpec::Circle {
                n,
                radius,
                noise_std,
            } => {
                vec![
                    ("n", n as f64),
                    ("radius", radius),
                    ("noise_std", noise_std),
                ]
            }
        }
    }

    pub fn provenance(&self, seed: u64) -> Vec<(String, String)> {
        let mut p = vec![("generator".to_string(), self.name().to_string())];
        p.extend(
            self.params()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string())),
        );
        if let GeneratorSpec::SquareWithHole { .. } = self {
            p.push(("embedding".into(), format!("curved-sheet h={SHEET_HEIGHT}")));
        }
        p.push(("seed".into(), seed.to_string()));
        p
    }

    /// Parses a generator and seed back from provenance lines.
    pub fn from_provenance(p: &[(String, String)]) -> Result<(GeneratorSpec, u64)> {
        let get = |key: &str| -> Result<&str> {
            p.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format(format!("provenance is missing '{key}'")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("provenance value for '{key}' is not a number")))
        };
        let n = get("n")?
            .parse::<usize>()
            .map_err(|_| Error::Format("provenance value for 'n' is not an integer".into()))?;
        let spec = match get("generator")? {
            "sine" => GeneratorSpec::Sine {
                n,
                amplitude: num("amplitude")?,
                frequency: num("frequency")?,
                noise_std: num("noise_std")?,
            },
            "square-hole" => GeneratorSpec::SquareWithHole {
                n,
                outer_side: num("outer_side")?,
                hole_side: num("hole_side")?,
                embed_noise: num("embed_noise")?,
            },
            "circle" => GeneratorSpec::Circle {
                n,
                radius: num("radius")?,
                noise_std: num("noise_std")?,
            },
            other => return Err(Error::Format(format!("unknown generator '{other}'"))),
        };
        let seed = get("seed")?
            .parse::<u64>()
            .map_err(|_| Error::Format("provenance seed is not an integer".into()))?;
        Ok((spec, seed))
    }
}

fn check_common(n: usize, noise: f64, min_n: usize) -> Result<()> {
    if n < min_n {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_n} samples, got {n}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise level must be nonnegative, got {noise}"
        )));
    }
    Ok(())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `(t, a·sin(ω t))` plus isotropic Gaussian noise, `t` uniform on
/// [`SINE_INTERVAL`]; ground-truth latent `t`.
pub fn gen_sine_curve(
    n: usize,
    amplitude: f64,
    frequency: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Dataset> {
    check_common(n, noise_std, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = RealArray::zeros(2, n);
    let mut lat = RealArray::zeros(1, n);
    for j in 0..n {
        let t = rng.random_range(SINE_INTERVAL.0..SINE_INTERVAL.1);
        pts[(0, j)] = t + noise_std * normal(&mut rng);
        pts[(1, j)] = amplitude * (frequency * t).sin() + noise_std * normal(&mut rng);
        lat[(0, j)] = t;
    }
    let spec = GeneratorSpec::Sine {
        n,
        amplitude,
        frequency,
        noise_std,
    };
    Dataset::new(pts, Some(lat), spec.provenance(seed))
}

/// Rejection-samples `n` points uniformly on the square of side `outer_side`
/// centered at the origin, minus the concentric square hole. Returns the
/// `2 x n` samples and the number of candidates drawn.
pub fn sample_square_with_hole<R: Rng + ?Sized>(
    n: usize,
    outer_side: f64,
    hole_side: f64,
    rng: &mut R,
) -> Result<(RealArray, usize)> {
    if !(hole_side > 0.0 && hole_side < outer_side && outer_side.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "degenerate region: need 0 < hole_side < outer_side, got hole {hole_side}, outer {outer_side}"
        )));
    }
    let (half, hole) = (outer_side / 2.0, hole_side / 2.0);
    let mut uv = RealArray::zeros(2, n);
    let mut attempts = 0;
    for j in 0..n {
        loop {
            attempts += 1;
            let u = rng.random_range(-half..half);
            let v = rng.random_range(-half..half);
            if u.abs() >= hole || v.abs() >= hole {
                uv[(0, j)] = u;
                uv[(1, j)] = v;
                break;
            }
        }
    }
    Ok((uv, attempts))
}

/// Square-with-hole samples embedded in R³ as `(u, v, h·sin u·cos v)` with
/// `h =` [`SHEET_HEIGHT`], plus isotropic noise; ground-truth latent `(u, v)`.
pub fn gen_square_with_hole(
    n: usize,
    outer_side: f64,
    hole_side: f64,
    embed_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    check_common(n, embed_noise, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (uv, attempts) = sample_square_with_hole(n, outer_side, hole_side, &mut rng)?;
    let mut pts = RealArray::zeros(3, n);
    for j in 0..n {
        let (u, v) = (uv[(0, j)], uv[(1, j)]);
        let clean = [u, v, SHEET_HEIGHT * u.sin() * v.cos()];
        for (i, c) in clean.iter().enumerate() {
            pts[(i, j)] = c + embed_noise * normal(&mut rng);
        }
    }
    let spec = GeneratorSpec::SquareWithHole {
        n,
        outer_side,
        hole_side,
        embed_noise,
    };
    let mut prov = spec.provenance(seed);
    prov.push(("attempts".into(), attempts.to_string()));
    Dataset::new(pts, Some(uv), prov)
}

/// `(r cos θ, r sin θ)` plus isotropic noise, `θ` uniform on [`CIRCLE_ARC`];
/// ground-truth latent `θ`.
pub fn gen_circle(n: usize, radius: f64, noise_std: f64, seed: u64) -> Result<Dataset> {
    check_common(n, noise_std, 2)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = RealArray::zeros(2, n);
    let mut lat = RealArray::zeros(1, n);
    for j in 0..n {
        let th = rng.random_range(CIRCLE_ARC.0..CIRCLE_ARC.1);
        pts[(0, j)] = radius * th.cos() + noise_std * normal(&mut rng);
        pts[(1, j)] = radius * th.sin() + noise_std * normal(&mut rng);
        lat[(0, j)] = th;
    }
    let spec = GeneratorSpec::Circle {
        n,
        radius,
        noise_std,
    };
    Dataset::new(pts, Some(lat), spec.provenance(seed))
}
