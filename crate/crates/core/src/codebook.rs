//! Uniform rectangular planar array (URPA) responses and the analog beam
//! codebook realizable with quantized phase shifters.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the array plane sits in the AP's frame.
///
/// Angles handed to [`array_response`] are always expressed in the AP frame:
/// azimuth in the horizontal plane from +x, elevation from the horizontal
/// plane (negative is downward).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArrayOrientation {
    /// Array in the ceiling plane, boresight pointing straight down.
    #[default]
    CeilingDown,
    /// Array in a vertical plane, boresight along +x (azimuth 0, elevation 0).
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayGeometry {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
    pub element_gain_db: f64,
    pub orientation: ArrayOrientation,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 4,
            element_spacing: 0.5,
            element_gain_db: 5.0,
            orientation: ArrayOrientation::CeilingDown,
        }
    }
}

impl ArrayGeometry {
    pub fn new(rows: usize, cols: usize, orientation: ArrayOrientation) -> Self {
        Self {
            rows,
            cols,
            orientation,
            ..Self::default()
        }
    }

    /// Number of antenna elements M.
    pub fn num_elements(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidConfig(
                "array rows and cols must be at least 1".into(),
            ));
        }
        if !(self.element_spacing > 0.0 && self.element_spacing.is_finite()) {
            return Err(Error::InvalidConfig(
                "element_spacing must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Direction cosines along the column and row axes of the array.
    fn direction_cosines(&self, azimuth: f64, elevation: f64) -> (f64, f64) {
        let (sa, ca) = azimuth.sin_cos();
        let (se, ce) = elevation.sin_cos();
        match self.orientation {
            ArrayOrientation::CeilingDown => (ce * ca, ce * sa),
            ArrayOrientation::Wall => (ce * sa, se),
        }
    }
}

/// Steering vector a(azimuth, elevation) of length M, element (r, c) at
/// index `r * cols + c`. Element indices are centered on the array so the
/// phase reference is the array center; every entry has unit modulus.
pub fn array_response(azimuth: f64, elevation: f64, geom: &ArrayGeometry) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); geom.num_elements()];
    array_response_into(azimuth, elevation, geom, &mut out);
    out
}

pub(crate) fn array_response_into(
    azimuth: f64,
    elevation: f64,
    geom: &ArrayGeometry,
    out: &mut [Complex64],
) {
    let (u_col, u_row) = geom.direction_cosines(azimuth, elevation);
    let k = 2.0 * PI * geom.element_spacing;
    let r0 = (geom.rows as f64 - 1.0) / 2.0;
    let c0 = (geom.cols as f64 - 1.0) / 2.0;
    for r in 0..geom.rows {
        let row_phase = k * (r as f64 - r0) * u_row;
        for c in 0..geom.cols {
            let phase = row_phase + k * (c as f64 - c0) * u_col;
            out[r * geom.cols + c] = Complex64::from_polar(1.0, phase);
        }
    }
}

/// Ordered set of unit-norm analog beams.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    beams: Vec<Vec<Complex64>>,
    phase_bits: Option<u32>,
    rows: usize,
    cols: usize,
}

impl Codebook {
    /// 2-D DFT codebook over the `rows x cols` grid, i.e. the Kronecker
    /// product of two 1-D DFT codebooks, with every phase rounded to the
    /// `2^bits` grid. `None` disables quantization.
    ///
    /// Beam `kr * cols + kc` has element phase `2*pi*(kr*r/rows + kc*c/cols)`.
    pub fn build(geom: &ArrayGeometry, phase_bits: Option<u32>) -> Result<Self> {
        geom.validate()?;
        if let Some(b) = phase_bits {
            if !(1..=52).contains(&b) {
                return Err(Error::InvalidConfig(format!(
                    "phase quantization bits must be in 1..=52, got {b}"
                )));
            }
        }
        let (rows, cols) = (geom.rows, geom.cols);
        let m = rows * cols;
        let mut beams = Vec::with_capacity(m);
        for kr in 0..rows {
            for kc in 0..cols {
                let mut beam = Vec::with_capacity(m);
                for r in 0..rows {
                    for c in 0..cols {
                        // Reduce the integer part first so the rounding grid
                        // sees a phase in [0, 2*pi).
                        let turns = ((kr * r) % rows) as f64 / rows as f64
                            + ((kc * c) % cols) as f64 / cols as f64;
                        let phase = quantize_phase(2.0 * PI * turns, phase_bits);
                        beam.push(Complex64::from_polar(1.0, phase));
                    }
                }
                let norm = beam.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                beam.iter_mut().for_each(|z| *z /= norm);
                beams.push(beam);
            }
        }
        Ok(Self {
            beams,
            phase_bits,
            rows,
            cols,
        })
    }

    /// Codebook from explicit beams, each normalized to unit norm. Used for
    /// toy instances and imported codebooks.
    pub fn from_beams(beams: Vec<Vec<Complex64>>) -> Result<Self> {
        let m = beams
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidArgument("codebook needs at least one beam".into()))?;
        let mut out = Vec::with_capacity(beams.len());
        for beam in beams {
            if beam.len() != m {
                return Err(Error::dimension("codebook beam", m, beam.len()));
            }
            let norm = beam.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::InvalidArgument("zero beam in codebook".into()));
            }
            out.push(beam.into_iter().map(|z| z / norm).collect());
        }
        Ok(Self {
            beams: out,
            phase_bits: None,
            rows: 1,
            cols: m,
        })
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    /// Length of each beam vector.
    pub fn dim(&self) -> usize {
        self.beams[0].len()
    }

    pub fn phase_bits(&self) -> Option<u32> {
        self.phase_bits
    }

    pub fn beam(&self, i: usize) -> &[Complex64] {
        &self.beams[i]
    }

    pub fn beams(&self) -> &[Vec<Complex64>] {
        &self.beams
    }

    /// True when every entry's phase sits on the quantization grid.
    pub fn phases_on_grid(&self, tol: f64) -> bool {
        let Some(bits) = self.phase_bits else {
            return true;
        };
        let step = 2.0 * PI / (1u64 << bits) as f64;
        self.beams.iter().flatten().all(|z| {
            let steps = z.arg() / step;
            (steps - steps.round()).abs() < tol
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let beams: Vec<Vec<[f64; 2]>> = self
            .beams
            .iter()
            .map(|b| b.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        serde_json::json!({
            "rows": self.rows,
            "cols": self.cols,
            "phase_bits": self.phase_bits,
            "beams": beams,
        })
    }
}

fn quantize_phase(phase: f64, bits: Option<u32>) -> f64 {
    match bits {
        None => phase,
        Some(b) => {
            let step = 2.0 * PI / (1u64 << b) as f64;
            (phase / step).round() * step
        }
    }
}

/// |h f|^2 for row vector `h` and column vector `f`.
pub fn beam_gain(h: &[Complex64], f: &[Complex64]) -> Result<f64> {
    if h.len() != f.len() {
        return Err(Error::dimension("beam_gain", h.len(), f.len()));
    }
    Ok(beam_gain_unchecked(h, f))
}

#[inline]
pub(crate) fn beam_gain_unchecked(h: &[Complex64], f: &[Complex64]) -> f64 {
    h.iter()
        .zip(f)
        .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
        .norm_sqr()
}

/// Hermitian inner product <x, y> = sum conj(x_m) y_m.
pub fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wall44() -> ArrayGeometry {
        ArrayGeometry::new(4, 4, ArrayOrientation::Wall)
    }

    #[test]
    fn broadside_is_all_ones() {
        let a = array_response(0.0, 0.0, &wall44());
        assert!(a
            .iter()
            .all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        // Ceiling array: broadside is straight down.
        let a = array_response(0.3, -PI / 2.0, &ArrayGeometry::default());
        assert!(a
            .iter()
            .all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn response_norm_is_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for geom in [wall44(), ArrayGeometry::default()] {
            for _ in 0..100 {
                let a = array_response(rng.gen_range(-PI..PI), rng.gen_range(-PI..PI), &geom);
                assert!((norm_sqr(&a) - 16.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn response_conjugate_symmetric_under_negation() {
        let geom = wall44();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let (az, el) = (rng.gen_range(-PI..PI), rng.gen_range(-1.5..1.5));
            let a = array_response(az, el, &geom);
            let b = array_response(-az, -el, &geom);
            // Direct phase computation for the centered wall array.
            for r in 0..4 {
                for c in 0..4 {
                    let phase =
                        PI * ((c as f64 - 1.5) * el.cos() * az.sin() + (r as f64 - 1.5) * el.sin());
                    let direct = Complex64::from_polar(1.0, phase);
                    assert!((a[r * 4 + c] - direct).norm() < 1e-12);
                    assert!((b[r * 4 + c] - direct.conj()).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn codebook_has_m_unit_beams() {
        let cb = Codebook::build(&ArrayGeometry::default(), Some(6)).unwrap();
        assert_eq!(cb.len(), 16);
        for b in cb.beams() {
            assert!((norm_sqr(b) - 1.0).abs() < 1e-12);
            assert!(b.iter().all(|z| (z.norm() - 0.25).abs() < 1e-12));
        }
        assert!(cb.phases_on_grid(1e-9));
    }

    #[test]
    fn unquantized_first_beam_is_broadside() {
        let cb = Codebook::build(&ArrayGeometry::default(), None).unwrap();
        assert!(cb
            .beam(0)
            .iter()
            .all(|z| (z - Complex64::new(0.25, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn unquantized_beams_orthonormal() {
        let cb = Codebook::build(&ArrayGeometry::default(), None).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let ip = inner(cb.beam(i), cb.beam(j)).norm();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-12, "{i} {j} {ip}");
            }
        }
    }

    #[test]
    fn quantized_cross_correlation_bounded() {
        for bits in 2..=8 {
            let cb = Codebook::build(&ArrayGeometry::default(), Some(bits)).unwrap();
            for i in 0..16 {
                for j in 0..16 {
                    if i != j {
                        assert!(inner(cb.beam(i), cb.beam(j)).norm() <= 0.3);
                    }
                }
            }
        }
    }

    #[test]
    fn one_bit_codebook_lies_on_grid() {
        let cb =
            Codebook::build(&ArrayGeometry::new(3, 5, ArrayOrientation::Wall), Some(1)).unwrap();
        assert_eq!(cb.len(), 15);
        assert!(cb.phases_on_grid(1e-9));
        assert!(Codebook::build(&ArrayGeometry::default(), Some(0)).is_err());
    }

    #[test]
    fn best_beam_covers_space() {
        let cb = Codebook::build(&ArrayGeometry::default(), Some(6)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let h: Vec<Complex64> = (0..16)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let best = cb
                .beams()
                .iter()
                .map(|f| beam_gain(&h, f).unwrap())
                .fold(0.0, f64::max);
            assert!(best >= norm_sqr(&h) / 16.0 - 1e-12);
        }
    }

    #[test]
    fn beam_gain_cases() {
        let cb = Codebook::build(&ArrayGeometry::default(), None).unwrap();
        // h = f^H (conjugate transpose of the beam) gives unit gain.
        let h: Vec<Complex64> = cb.beam(5).iter().map(|z| z.conj()).collect();
        assert!((beam_gain(&h, cb.beam(5)).unwrap() - 1.0).abs() < 1e-12);
        // conj(f_5) is orthogonal to every other DFT column under this product
        // except the column whose conjugate it is; f_0 is real so f_0 and f_5
        // are orthogonal under both products.
        let h0: Vec<Complex64> = cb.beam(0).to_vec();
        assert!(beam_gain(&h0, cb.beam(5)).unwrap() < 1e-24);
        assert!(beam_gain(&h, &cb.beam(0)[..15]).is_err());
    }

    #[test]
    fn codebook_json_export() {
        let cb = Codebook::build(&ArrayGeometry::default(), Some(6)).unwrap();
        let v = cb.to_json();
        assert_eq!(v["beams"].as_array().unwrap().len(), 16);
        assert_eq!(v["beams"][3].as_array().unwrap().len(), 16);
        assert_eq!(v["phase_bits"], 6);
    }

    proptest::proptest! {
        #[test]
        fn gain_bounded_by_channel_norm(
            re in proptest::collection::vec(-10.0f64..10.0, 16),
            im in proptest::collection::vec(-10.0f64..10.0, 16),
            idx in 0usize..16,
        ) {
            let cb = Codebook::build(&ArrayGeometry::default(), Some(6)).unwrap();
            let h: Vec<Complex64> = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
            let g = beam_gain(&h, cb.beam(idx)).unwrap();
            proptest::prop_assert!(g <= norm_sqr(&h) * (1.0 + 1e-12));
        }
    }
}
