//! The bandit's world: network layout, per-AP SNR, the beam-sweep oracle,
//! context construction, reward and regret.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::{beam_gain_unchecked, norm_sqr, Codebook};
use crate::{db_to_linear, dbm_to_mw, Error, Position, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApState {
    Awake,
    Sleep,
}

/// Indoor office: APs on the ceiling, user on a grid spanning the floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkLayout {
    /// Room extents (x, y) in meters; used to normalize context coordinates.
    pub room: [f64; 2],
    pub ap_positions: Vec<Position>,
    pub user_height: f64,
    /// Spacing of the candidate user grid. Points sit at spacing/2 + k*spacing.
    pub user_grid_spacing: f64,
    pub tx_power_dbm: f64,
    /// Recorded for completeness; the downlink simulation never uses it.
    pub user_tx_power_dbm: f64,
    pub awake_power_w: f64,
    pub sleep_power_w: f64,
    pub bandwidth_hz: f64,
    pub antenna_gain_db: f64,
    pub noise_figure_db: f64,
    pub noise_density_dbm_hz: f64,
}

impl Default for NetworkLayout {
    fn default() -> Self {
        let h = 2.6;
        Self {
            room: [60.0, 30.0],
            ap_positions: vec![
                [20.0, 10.0, h],
                [30.0, 10.0, h],
                [40.0, 10.0, h],
                [20.0, 20.0, h],
                [30.0, 20.0, h],
                [40.0, 20.0, h],
            ],
            user_height: 1.0,
            user_grid_spacing: 2.0,
            tx_power_dbm: 20.0,
            user_tx_power_dbm: 5.0,
            awake_power_w: 1.0,
            sleep_power_w: 0.01,
            bandwidth_hz: 1e8,
            antenna_gain_db: 5.0,
            noise_figure_db: 3.0,
            noise_density_dbm_hz: -174.0,
        }
    }
}

impl NetworkLayout {
    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("layout: {m}")));
        if self.ap_positions.len() < 2 {
            return bad("need at least two APs");
        }
        if !(self.room[0] > 0.0 && self.room[1] > 0.0) {
            return bad("room extents must be positive");
        }
        if !(self.user_grid_spacing > 0.0) {
            return bad("user_grid_spacing must be positive");
        }
        if self.user_grid_spacing > self.room[0].min(self.room[1]) {
            return bad("user_grid_spacing larger than the room");
        }
        if !(self.awake_power_w > 0.0 && self.sleep_power_w > 0.0) {
            return bad("AP powers must be positive");
        }
        if !(self.bandwidth_hz > 0.0) {
            return bad("bandwidth_hz must be positive");
        }
        Ok(())
    }

    pub fn user_grid(&self) -> Vec<Position> {
        let s = self.user_grid_spacing;
        let nx = (self.room[0] / s).floor() as usize;
        let ny = (self.room[1] / s).floor() as usize;
        let mut out = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                out.push([
                    s / 2.0 + ix as f64 * s,
                    s / 2.0 + iy as f64 * s,
                    self.user_height,
                ]);
            }
        }
        out
    }

    /// Noise power over the band in mW: N0 + 10 log10(W) + NF.
    pub fn noise_power_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm())
    }

    pub fn noise_power_dbm(&self) -> f64 {
        self.noise_density_dbm_hz + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }

    pub fn state_power_w(&self, state: ApState) -> f64 {
        match state {
            ApState::Awake => self.awake_power_w,
            ApState::Sleep => self.sleep_power_w,
        }
    }

    /// SNR contribution of one AP serving with beam `b`.
    pub fn snr(&self, h: &[Complex64], b: &[Complex64]) -> Result<f64> {
        snr(
            self.tx_power_dbm,
            h,
            b,
            self.noise_power_mw(),
            self.antenna_gain_db,
        )
    }
}

/// Gamma = P * G * |h b|^2 / sigma^2 with P in dBm, sigma^2 in mW.
pub fn snr(
    tx_power_dbm: f64,
    h: &[Complex64],
    b: &[Complex64],
    noise_mw: f64,
    gains_db: f64,
) -> Result<f64> {
    if !(noise_mw > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise power must be positive, got {noise_mw}"
        )));
    }
    let g = crate::codebook::beam_gain(h, b)?;
    Ok(dbm_to_mw(tx_power_dbm) * db_to_linear(gains_db) * g / noise_mw)
}

/// Index of the codebook beam with the largest gain; ties go to the lowest index.
pub fn best_beam_index(h: &[Complex64], codebook: &Codebook) -> usize {
    let mut best = 0;
    let mut best_gain = f64::NEG_INFINITY;
    for (i, f) in codebook.beams().iter().enumerate() {
        let g = beam_gain_unchecked(h, f);
        if g > best_gain {
            best = i;
            best_gain = g;
        }
    }
    best
}

/// Beam-sweep solution of the network IA problem. The sum objective
/// separates per AP, so each PAP takes its own best beam.
pub fn solve_pap_beams<H: AsRef<[Complex64]>>(
    channels: &[H],
    codebook: &Codebook,
) -> Result<Vec<usize>> {
    if channels.is_empty() {
        return Err(Error::InvalidArgument("need at least one PAP".into()));
    }
    channels
        .iter()
        .map(|h| {
            let h = h.as_ref();
            if h.len() != codebook.dim() {
                return Err(Error::dimension("PAP channel", codebook.dim(), h.len()));
            }
            Ok(best_beam_index(h, codebook))
        })
        .collect()
}

/// Exhaustive evaluation of the reward over the codebook: (i*, alpha_max).
pub fn best_beam_oracle(h: &[Complex64], codebook: &Codebook, noise: f64) -> Result<(usize, f64)> {
    let rewards = all_rewards(h, codebook, noise)?;
    let mut best = 0;
    for (i, &r) in rewards.iter().enumerate() {
        if r > rewards[best] {
            best = i;
        }
    }
    Ok((best, rewards[best]))
}

/// Reward of every codebook beam.
pub fn all_rewards(h: &[Complex64], codebook: &Codebook, noise: f64) -> Result<Vec<f64>> {
    codebook
        .beams()
        .iter()
        .map(|f| reward(h, f, noise))
        .collect()
}

/// alpha = |h b|^2 / sigma^2 * 1 / ||h h^H||^2 = |h b|^2 / (sigma^2 ||h||^4).
pub fn reward(h: &[Complex64], b: &[Complex64], noise: f64) -> Result<f64> {
    if h.len() != b.len() {
        return Err(Error::dimension("reward", h.len(), b.len()));
    }
    if !(noise > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise power must be positive, got {noise}"
        )));
    }
    let n2 = norm_sqr(h);
    if n2 == 0.0 {
        return Err(Error::DegenerateChannel);
    }
    Ok(beam_gain_unchecked(h, b) / (noise * n2 * n2))
}

/// Fraction of the matched-filter gain captured by `b`: alpha * sigma^2 * ||h||^2,
/// which lies in [0, 1] for unit-norm beams.
pub fn beam_efficiency(h: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if h.len() != b.len() {
        return Err(Error::dimension("beam_efficiency", h.len(), b.len()));
    }
    let n2 = norm_sqr(h);
    if n2 == 0.0 {
        return Err(Error::DegenerateChannel);
    }
    Ok(beam_gain_unchecked(h, b) / n2)
}

/// delta = alpha_max - alpha.
pub fn regret(alpha: f64, alpha_max: f64) -> Result<f64> {
    if alpha > alpha_max {
        return Err(Error::OracleViolation(format!(
            "reward {alpha} exceeds oracle reward {alpha_max}"
        )));
    }
    Ok(alpha_max - alpha)
}

/// delta / alpha_max, in [0, 1].
pub fn normalized_regret(alpha: f64, alpha_max: f64) -> Result<f64> {
    let d = regret(alpha, alpha_max)?;
    if !(alpha_max > 0.0) {
        return Err(Error::InvalidArgument(
            "normalized regret needs a positive oracle reward".into(),
        ));
    }
    Ok(d / alpha_max)
}

/// Channel estimate available at the AP: perfect, or the true channel plus
/// complex Gaussian error at the given per-element SNR.
pub fn estimate_channel<R: Rng + ?Sized>(
    h: &[Complex64],
    error_snr_db: Option<f64>,
    rng: &mut R,
) -> Vec<Complex64> {
    match error_snr_db {
        None => h.to_vec(),
        Some(snr_db) => {
            let per_elem = norm_sqr(h) / h.len() as f64;
            let std = (per_elem / db_to_linear(snr_db) / 2.0).sqrt();
            h.iter()
                .map(|z| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    z + Complex64::new(re, im) * std
                })
                .collect()
        }
    }
}

/// Bandit input: normalized PAP planar locations and their beams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    /// [x_1, y_1, ..., x_N, y_N], each scaled to [0, 1] by the room extents.
    pub locations: Vec<f64>,
    /// [Re(b_1), ..., Re(b_N), Im(b_1), ..., Im(b_N)], each b_n of length M.
    pub beams: Vec<f64>,
}

impl Context {
    pub fn num_paps(&self) -> usize {
        self.locations.len() / 2
    }

    /// Reassembles the n-th PAP beam as complex.
    pub fn beam(&self, n: usize, m: usize) -> Vec<Complex64> {
        let half = self.beams.len() / 2;
        (0..m)
            .map(|i| Complex64::new(self.beams[n * m + i], self.beams[half + n * m + i]))
            .collect()
    }
}

pub fn build_context<B: AsRef<[Complex64]>>(
    pap_positions: &[Position],
    pap_beams: &[B],
    room: [f64; 2],
) -> Result<Context> {
    if pap_positions.len() != pap_beams.len() {
        return Err(Error::dimension(
            "context PAP count",
            pap_positions.len(),
            pap_beams.len(),
        ));
    }
    let locations = pap_positions
        .iter()
        .flat_map(|p| [p[0] / room[0], p[1] / room[1]])
        .collect();
    let mut re = Vec::new();
    let mut im = Vec::new();
    for b in pap_beams {
        for z in b.as_ref() {
            re.push(z.re);
            im.push(z.im);
        }
    }
    re.extend(im);
    Ok(Context {
        locations,
        beams: re,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub chosen_action: usize,
    pub reward: f64,
    pub regret: f64,
    pub alpha_max: f64,
    pub best_action: usize,
    pub explored: bool,
}

impl EpisodeOutcome {
    pub fn normalized_regret(&self) -> f64 {
        self.regret / self.alpha_max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{array_response, ArrayGeometry, ArrayOrientation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cb() -> Codebook {
        Codebook::build(&ArrayGeometry::default(), Some(6)).unwrap()
    }

    fn random_h(rng: &mut ChaCha8Rng, m: usize) -> Vec<Complex64> {
        (0..m)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn noise_power_default() {
        let l = NetworkLayout::default();
        assert!((l.noise_power_dbm() + 91.0).abs() < 1e-9);
        assert_eq!(l.user_grid().len(), 30 * 15);
        l.validate().unwrap();
    }

    #[test]
    fn snr_examples() {
        let cb = cb();
        let f = cb.beam(3);
        let h: Vec<Complex64> = f.iter().map(|z| z.conj()).collect();
        assert!((snr(0.0, &h, f, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
        let ortho: Vec<Complex64> = cb.beam(0).to_vec();
        assert!(snr(0.0, &ortho, f, 1.0, 0.0).unwrap() < 1e-20);
        let a = snr(10.0, &h, f, 0.5, 5.0).unwrap();
        let b = snr(10.0 + 10.0 * 2f64.log10(), &h, f, 0.5, 5.0).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
        assert!(snr(0.0, &h, f, 0.0, 0.0).is_err());
    }

    #[test]
    fn sweep_picks_aligned_beam_and_breaks_ties_low() {
        let cb = cb();
        let h: Vec<Complex64> = cb.beam(3).iter().map(|z| z.conj()).collect();
        assert_eq!(solve_pap_beams(&[h], &cb).unwrap(), vec![3]);

        let tie: Vec<Complex64> = cb
            .beam(0)
            .iter()
            .zip(cb.beam(1))
            .map(|(a, b)| (a + b).conj())
            .collect();
        let g0 = beam_gain_unchecked(&tie, cb.beam(0));
        let g1 = beam_gain_unchecked(&tie, cb.beam(1));
        assert!((g0 - g1).abs() < 1e-12);
        assert_eq!(best_beam_index(&tie, &cb), 0);
        assert!(solve_pap_beams::<Vec<Complex64>>(&[], &cb).is_err());
    }

    #[test]
    fn exact_tie_goes_to_lowest_index() {
        // Two identical beams give bit-identical gains.
        let b = vec![Complex64::new(0.5, 0.0); 4];
        let cb = Codebook::from_beams(vec![b.clone(), b]).unwrap();
        let h = vec![Complex64::new(1.0, 1.0); 4];
        assert_eq!(best_beam_index(&h, &cb), 0);
        assert_eq!(best_beam_oracle(&h, &cb, 1.0).unwrap().0, 0);
    }

    #[test]
    fn oracle_single_beam_and_dominance() {
        let one = Codebook::from_beams(vec![vec![Complex64::new(1.0, 0.0); 4]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_h(&mut rng, 4);
        assert_eq!(best_beam_oracle(&h, &one, 1.0).unwrap().0, 0);

        let cb = cb();
        for _ in 0..500 {
            let h = random_h(&mut rng, 16);
            let (i, amax) = best_beam_oracle(&h, &cb, 2.0).unwrap();
            assert_eq!(i, solve_pap_beams(&[&h], &cb).unwrap()[0]);
            for f in cb.beams() {
                assert!(reward(&h, f, 2.0).unwrap() <= amax);
            }
        }
    }

    #[test]
    fn reward_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_h(&mut rng, 16);
        let n = norm_sqr(&h);
        let matched: Vec<Complex64> = h.iter().map(|z| z.conj() / n.sqrt()).collect();
        let noise = 3.0;
        let a = reward(&h, &matched, noise).unwrap();
        assert!((a - 1.0 / (noise * n)).abs() / a < 1e-12);
        assert!((beam_efficiency(&h, &matched).unwrap() - 1.0).abs() < 1e-12);

        // Orthogonal under the row-times-column product: sum h_m b_m = 0.
        let mut b = vec![Complex64::new(0.0, 0.0); 16];
        b[0] = h[1];
        b[1] = -h[0];
        assert!(reward(&h, &b, noise).unwrap() < 1e-30);

        let zero = vec![Complex64::new(0.0, 0.0); 16];
        assert!(matches!(
            reward(&zero, &matched, 1.0),
            Err(Error::DegenerateChannel)
        ));
    }

    #[test]
    fn regret_examples() {
        assert_eq!(regret(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(normalized_regret(0.0, 5.0).unwrap(), 1.0);
        assert!(matches!(regret(3.0, 2.0), Err(Error::OracleViolation(_))));
        assert!(normalized_regret(0.0, 0.0).is_err());
    }

    #[test]
    fn context_dims() {
        let cb = cb();
        let room = [60.0, 30.0];
        for n in [4usize, 5] {
            let pos: Vec<Position> = (0..n).map(|i| [10.0 * i as f64, 15.0, 2.6]).collect();
            let beams: Vec<&[Complex64]> = (0..n).map(|i| cb.beam(i)).collect();
            let x = build_context(&pos, &beams, room).unwrap();
            assert_eq!(x.locations.len(), 2 * n);
            assert_eq!(x.beams.len(), 2 * 16 * n);
            for i in 0..n {
                let b = x.beam(i, 16);
                assert_eq!(b, cb.beam(i));
                assert!((norm_sqr(&b) - 1.0).abs() < 1e-12);
            }
            assert_eq!(x, build_context(&pos, &beams, room).unwrap());
            assert!(x.locations.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let pos = [[1.0, 1.0, 2.6]];
        assert!(build_context(&pos, &[cb.beam(0), cb.beam(1)], room).is_err());
    }

    #[test]
    fn estimate_error_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = array_response(0.2, 0.1, &ArrayGeometry::new(4, 4, ArrayOrientation::Wall));
        assert_eq!(estimate_channel(&h, None, &mut rng), h);
        let noisy = estimate_channel(&h, Some(10.0), &mut rng);
        assert_ne!(noisy, h);
    }
}
