//! Clustered mmWave channel between an AP and the user.
//!
//! h = (1/sqrt(Q)) * sum_k sum_q p_kq r_kq a(theta_kq, phi_kq), where the
//! first cluster (when not blocked) is aligned with the true AP-to-user
//! direction and the remaining clusters arrive from random directions. This
//! keeps neighboring APs' best beams spatially correlated, which is what the
//! bandit learns from.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::{array_response_into, ArrayGeometry};
use crate::{Error, Position, Result};

/// Probability model for the LOS cluster being present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum LosBlockage {
    /// LOS always present.
    Never,
    /// LOS never present.
    Always,
    /// LOS present with probability max(0, 1 - d / cutoff_m).
    Linear { cutoff_m: f64 },
}

impl LosBlockage {
    pub fn los_probability(&self, distance: f64) -> f64 {
        match *self {
            LosBlockage::Never => 1.0,
            LosBlockage::Always => 0.0,
            LosBlockage::Linear { cutoff_m } => (1.0 - distance / cutoff_m).clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub carrier_frequency_hz: f64,
    /// NLOS cluster count is drawn uniformly from `min..=max`.
    pub min_nlos_clusters: usize,
    pub max_nlos_clusters: usize,
    /// Subpaths per cluster (Q).
    pub num_subpaths: usize,
    /// RMS Laplacian spread of subpath angles around the cluster center.
    pub angular_spread_deg: f64,
    /// Path loss at 1 m.
    pub pathloss_intercept_db: f64,
    pub los_exponent: f64,
    pub nlos_exponent: f64,
    pub nlos_extra_loss_db: f64,
    pub los_blockage: LosBlockage,
    /// When false, r_kq is fixed to 1.
    pub small_scale_fading: bool,
    pub rng_seed: u64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 6.0e10,
            min_nlos_clusters: 1,
            max_nlos_clusters: 4,
            num_subpaths: 10,
            angular_spread_deg: 5.0,
            pathloss_intercept_db: 68.0,
            los_exponent: 2.0,
            nlos_exponent: 2.9,
            nlos_extra_loss_db: 10.0,
            los_blockage: LosBlockage::Linear { cutoff_m: 40.0 },
            small_scale_fading: true,
            rng_seed: 0,
        }
    }
}

impl ChannelParams {
    /// Single LOS path, no fading, no NLOS clusters.
    pub fn los_only() -> Self {
        Self {
            min_nlos_clusters: 0,
            max_nlos_clusters: 0,
            num_subpaths: 1,
            angular_spread_deg: 0.0,
            los_blockage: LosBlockage::Never,
            small_scale_fading: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("channel: {m}")));
        if !(self.carrier_frequency_hz > 0.0) {
            return bad("carrier_frequency_hz must be positive");
        }
        if self.num_subpaths == 0 {
            return bad("num_subpaths must be at least 1");
        }
        if self.min_nlos_clusters > self.max_nlos_clusters {
            return bad("min_nlos_clusters exceeds max_nlos_clusters");
        }
        if self.max_nlos_clusters == 0 && self.los_blockage != LosBlockage::Never {
            return bad("at least one cluster must always exist");
        }
        if self.min_nlos_clusters == 0 && self.los_blockage == LosBlockage::Always {
            return bad("at least one cluster must always exist");
        }
        if !(self.los_exponent > 0.0 && self.nlos_exponent > 0.0) {
            return bad("pathloss exponents must be positive");
        }
        if !(self.angular_spread_deg >= 0.0) {
            return bad("angular_spread_deg must be nonnegative");
        }
        if let LosBlockage::Linear { cutoff_m } = self.los_blockage {
            if !(cutoff_m > 0.0) {
                return bad("los_blockage cutoff_m must be positive");
            }
        }
        Ok(())
    }

    /// Free-space loss at 1 m for the carrier, 20*log10(4*pi/lambda).
    pub fn free_space_intercept_db(&self) -> f64 {
        let wavelength = 299_792_458.0 / self.carrier_frequency_hz;
        20.0 * (4.0 * PI / wavelength).log10()
    }
}

/// One path of a generated realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub cluster: usize,
    pub path: usize,
    /// p_kq * r_kq.
    pub gain: Complex64,
    pub azimuth: f64,
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: Vec<Complex64>,
    pub ap_position: Position,
    pub user_position: Position,
    pub distance: f64,
    /// Whether the LOS cluster was drawn. False for imported channels.
    pub los: bool,
    /// Empty for imported channels.
    pub paths: Vec<PathRecord>,
    pub num_subpaths: usize,
}

impl ChannelRealization {
    /// Recomputes h from the stored path records.
    pub fn reconstruct(&self, geom: &ArrayGeometry) -> Vec<Complex64> {
        sum_paths(&self.paths, self.num_subpaths, geom)
    }

    pub fn norm_sqr(&self) -> f64 {
        crate::codebook::norm_sqr(&self.h)
    }
}

fn sum_paths(paths: &[PathRecord], q: usize, geom: &ArrayGeometry) -> Vec<Complex64> {
    let m = geom.num_elements();
    let mut h = vec![Complex64::new(0.0, 0.0); m];
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for p in paths {
        array_response_into(p.azimuth, p.elevation, geom, &mut a);
        for (hm, am) in h.iter_mut().zip(&a) {
            *hm += p.gain * am;
        }
    }
    let scale = 1.0 / (q as f64).sqrt();
    h.iter_mut().for_each(|z| *z *= scale);
    h
}

pub fn distance(a: &Position, b: &Position) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// LOS path loss PL0 + 10 n log10(d / 1 m).
pub fn path_loss_db(distance: f64, params: &ChannelParams) -> Result<f64> {
    check_distance(distance)?;
    Ok(params.pathloss_intercept_db + 10.0 * params.los_exponent * distance.log10())
}

/// Path loss of the reflected clusters: steeper exponent plus a fixed excess.
pub fn nlos_path_loss_db(distance: f64, params: &ChannelParams) -> Result<f64> {
    check_distance(distance)?;
    Ok(params.pathloss_intercept_db
        + 10.0 * params.nlos_exponent * distance.log10()
        + params.nlos_extra_loss_db)
}

fn check_distance(distance: f64) -> Result<()> {
    if !(distance >= 0.1) {
        return Err(Error::DegenerateGeometry(format!(
            "AP-user distance {distance} m is below 0.1 m"
        )));
    }
    Ok(())
}

/// Direction of `to` seen from `from`: (azimuth, elevation) in radians.
pub fn direction(from: &Position, to: &Position) -> (f64, f64) {
    let (dx, dy, dz) = (to[0] - from[0], to[1] - from[1], to[2] - from[2]);
    (dy.atan2(dx), dz.atan2(dx.hypot(dy)))
}

fn laplacian<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.gen::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws one realization. Deterministic given the RNG state.
pub fn generate_channel<R: Rng + ?Sized>(
    ap: &Position,
    user: &Position,
    params: &ChannelParams,
    geom: &ArrayGeometry,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let d = distance(ap, user);
    let los_amp = 10f64.powf(-path_loss_db(d, params)? / 20.0);
    let nlos_amp = 10f64.powf(-nlos_path_loss_db(d, params)? / 20.0);

    let los = rng.gen::<f64>() < params.los_blockage.los_probability(d);
    let n_nlos = rng.gen_range(params.min_nlos_clusters..=params.max_nlos_clusters);
    let spread = params.angular_spread_deg.to_radians() / std::f64::consts::SQRT_2;
    let q = params.num_subpaths;

    let mut centers = Vec::with_capacity(n_nlos + 1);
    if los {
        let (az, el) = direction(ap, user);
        centers.push((az, el, los_amp));
    }
    for _ in 0..n_nlos {
        let az = rng.gen_range(-PI..PI);
        let el = rng.gen_range(-PI / 2.0..=0.0);
        centers.push((az, el, nlos_amp));
    }

    let mut paths = Vec::with_capacity(centers.len() * q);
    for (k, &(az0, el0, amp)) in centers.iter().enumerate() {
        for path in 0..q {
            let azimuth = az0 + laplacian(rng, spread);
            let elevation = el0 + laplacian(rng, spread);
            let p = Complex64::from_polar(amp, rng.gen_range(0.0..2.0 * PI));
            let r = if params.small_scale_fading {
                complex_normal(rng)
            } else {
                Complex64::new(1.0, 0.0)
            };
            paths.push(PathRecord {
                cluster: k,
                path,
                gain: p * r,
                azimuth,
                elevation,
            });
        }
    }

    let h = sum_paths(&paths, q, geom);
    Ok(ChannelRealization {
        h,
        ap_position: *ap,
        user_position: *user,
        distance: d,
        los,
        paths,
        num_subpaths: q,
    })
}

#[derive(Serialize, Deserialize)]
struct DumpRecord {
    ap: Position,
    user: Position,
    h: Vec<[f64; 2]>,
}

/// Writes realizations as JSON Lines: `{"ap":[x,y,z],"user":[x,y,z],"h":[[re,im],...]}`.
pub fn write_channels<W: Write>(mut w: W, channels: &[ChannelRealization]) -> Result<()> {
    for ch in channels {
        let rec = DumpRecord {
            ap: ch.ap_position,
            user: ch.user_position,
            h: ch.h.iter().map(|z| [z.re, z.im]).collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a JSON Lines channel dump. Blank lines are skipped; record
/// indices in errors count non-blank lines from 0.
pub fn read_channels<R: BufRead>(reader: R, m: usize) -> Result<Vec<ChannelRealization>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = out.len();
        let rec: DumpRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            record,
            message: e.to_string(),
        })?;
        if rec.h.len() != m {
            return Err(Error::dimension("channel record", m, rec.h.len()));
        }
        out.push(ChannelRealization {
            h: rec
                .h
                .iter()
                .map(|&[re, im]| Complex64::new(re, im))
                .collect(),
            ap_position: rec.ap,
            user_position: rec.user,
            distance: distance(&rec.ap, &rec.user),
            los: false,
            paths: Vec::new(),
            num_subpaths: 1,
        });
    }
    Ok(out)
}

pub fn import_channels(path: impl AsRef<Path>, m: usize) -> Result<Vec<ChannelRealization>> {
    let f = std::fs::File::open(path)?;
    read_channels(std::io::BufReader::new(f), m)
}

pub fn export_channels(path: impl AsRef<Path>, channels: &[ChannelRealization]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_channels(&mut w, channels)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::norm_sqr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const AP: Position = [20.0, 10.0, 2.6];

    #[test]
    fn path_loss_examples() {
        let p = ChannelParams::default();
        assert!((path_loss_db(1.0, &p).unwrap() - 68.0).abs() < 1e-12);
        assert!((path_loss_db(10.0, &p).unwrap() - 88.0).abs() < 1e-12);
        assert!(matches!(
            path_loss_db(0.05, &p),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(path_loss_db(f64::NAN, &p).is_err());
        assert!((p.free_space_intercept_db() - 68.0).abs() < 0.1);
    }

    #[test]
    fn path_loss_monotone() {
        let p = ChannelParams::default();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..1000 {
            let pl = path_loss_db(0.1 * i as f64, &p).unwrap();
            assert!(pl >= prev);
            prev = pl;
        }
    }

    #[test]
    fn los_only_norm() {
        let p = ChannelParams::los_only();
        let geom = ArrayGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for user in [[25.0, 13.0, 1.0], [20.0, 10.0, 1.0], [50.0, 29.0, 1.0]] {
            let ch = generate_channel(&AP, &user, &p, &geom, &mut rng).unwrap();
            let want = 16.0 * 10f64.powf(-path_loss_db(ch.distance, &p).unwrap() / 10.0);
            assert!((ch.norm_sqr() / want - 1.0).abs() < 1e-12);
            assert_eq!(ch.h.len(), 16);
        }
    }

    #[test]
    fn user_below_ap_is_straight_down() {
        let p = ChannelParams::los_only();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ch = generate_channel(
            &AP,
            &[20.0, 10.0, 1.0],
            &p,
            &ArrayGeometry::default(),
            &mut rng,
        )
        .unwrap();
        assert!((ch.paths[0].elevation + PI / 2.0).abs() < 1e-12);
        assert!((ch.distance - 1.6).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_reconstructible() {
        let p = ChannelParams::default();
        let geom = ArrayGeometry::default();
        let user = [33.0, 21.0, 1.0];
        let a =
            generate_channel(&AP, &user, &p, &geom, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b =
            generate_channel(&AP, &user, &p, &geom, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a.h, b.h);
        assert_eq!(a.reconstruct(&geom), a.h);
        let clusters = a.paths.iter().map(|p| p.cluster).max().unwrap() + 1;
        assert_eq!(a.paths.len(), clusters * p.num_subpaths);
    }

    #[test]
    fn doubling_path_gains_doubles_norm() {
        let p = ChannelParams::default();
        let mut p2 = p.clone();
        p2.pathloss_intercept_db -= 20.0 * 2f64.log10();
        let geom = ArrayGeometry::default();
        let user = [41.0, 3.0, 1.0];
        for seed in 0..20 {
            let a = generate_channel(&AP, &user, &p, &geom, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            let b = generate_channel(&AP, &user, &p2, &geom, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            let ratio = (b.norm_sqr() / a.norm_sqr()).sqrt();
            assert!((ratio - 2.0).abs() < 1e-9, "{ratio}");
        }
    }

    #[test]
    fn ensemble_power_matches_expectation() {
        // E||h||^2 / M = P(LOS) L_los + E[K_nlos] L_nlos: paths add in power
        // because every path carries an independent uniform phase.
        let p = ChannelParams::default();
        let geom = ArrayGeometry::default();
        let user = [28.0, 16.0, 1.0];
        let d = distance(&AP, &user);
        let l_los = 10f64.powf(-path_loss_db(d, &p).unwrap() / 10.0);
        let l_nlos = 10f64.powf(-nlos_path_loss_db(d, &p).unwrap() / 10.0);
        let k_mean = (p.min_nlos_clusters + p.max_nlos_clusters) as f64 / 2.0;
        let expected = p.los_blockage.los_probability(d) * l_los + k_mean * l_nlos;

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 20_000;
        let mean = (0..n)
            .map(|_| norm_sqr(&generate_channel(&AP, &user, &p, &geom, &mut rng).unwrap().h) / 16.0)
            .sum::<f64>()
            / n as f64;
        assert!((mean / expected - 1.0).abs() < 0.05, "{mean} vs {expected}");
    }

    #[test]
    fn los_probability_model() {
        let b = LosBlockage::Linear { cutoff_m: 40.0 };
        assert_eq!(b.los_probability(0.0), 1.0);
        assert!((b.los_probability(10.0) - 0.75).abs() < 1e-12);
        assert_eq!(b.los_probability(50.0), 0.0);
    }

    #[test]
    fn dump_round_trip() {
        let p = ChannelParams::default();
        let geom = ArrayGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let chans: Vec<_> = (0..5)
            .map(|i| {
                generate_channel(&AP, &[5.0 + i as f64, 7.0, 1.0], &p, &geom, &mut rng).unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        write_channels(&mut buf, &chans).unwrap();
        let back = read_channels(buf.as_slice(), 16).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in chans.iter().zip(&back) {
            assert_eq!(a.h, b.h);
            assert_eq!(a.ap_position, b.ap_position);
            assert_eq!(a.user_position, b.user_position);
        }
    }

    #[test]
    fn dump_errors() {
        let h16: Vec<[f64; 2]> = vec![[0.5, -0.25]; 16];
        let ok = serde_json::json!({"ap": [0.0, 0.0, 2.6], "user": [1.0, 1.0, 1.0], "h": h16});
        let one = format!("{ok}\n");
        assert_eq!(read_channels(one.as_bytes(), 16).unwrap().len(), 1);

        let h15: Vec<[f64; 2]> = vec![[0.5, -0.25]; 15];
        let short = serde_json::json!({"ap": [0.0, 0.0, 2.6], "user": [1.0, 1.0, 1.0], "h": h15});
        assert!(matches!(
            read_channels(format!("{short}\n").as_bytes(), 16),
            Err(Error::Dimension {
                expected: 16,
                got: 15,
                ..
            })
        ));

        let broken = format!("{ok}\n\n{ok}\n{{\"ap\": [1,2]\n");
        match read_channels(broken.as_bytes(), 16) {
            Err(Error::Parse { record, .. }) => assert_eq!(record, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation() {
        assert!(ChannelParams::default().validate().is_ok());
        assert!(ChannelParams::los_only().validate().is_ok());
        let bad = [
            ChannelParams {
                num_subpaths: 0,
                ..Default::default()
            },
            ChannelParams {
                min_nlos_clusters: 0,
                max_nlos_clusters: 0,
                ..Default::default()
            },
            ChannelParams {
                los_exponent: 0.0,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(p.validate().is_err());
        }
    }
}
