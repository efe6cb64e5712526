//! Parametric phased-array beam model: discrete steerable beams with a
//! Gaussian main lobe, a side-lobe floor 20 dB under the peak, and
//! codebooks laid out as azimuth fans replicated per elevation row.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AntennaError {
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
    #[error("codebook parse error: {0}")]
    Parse(String),
}

/// Gain drop from peak to the side-lobe floor, dB.
pub const SIDE_LOBE_FLOOR_DB: f64 = 20.0;

/// One steerable beam: boresight pointing, half-power widths, peak gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub az_beamwidth_deg: f64,
    pub el_beamwidth_deg: f64,
    pub peak_gain_db: f64,
}

/// Wrap an angular difference into (-180, 180].
fn wrap_deg(delta: f64) -> f64 {
    let mut d = delta % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d <= -180.0 {
        d += 360.0;
    }
    d
}

impl Beam {
    /// Gain toward a direction, dB. Gaussian main lobe
    /// `peak - 12 * ((daz/az_bw)^2 + (del/el_bw)^2)`, floored at
    /// `peak - 20`. The quadratic coefficient makes the half-power width
    /// exact: at an offset of half a beamwidth the gain is peak - 3 dB.
    pub fn gain_db(&self, toward_azimuth_deg: f64, toward_elevation_deg: f64) -> f64 {
        let daz = wrap_deg(toward_azimuth_deg - self.azimuth_deg) / self.az_beamwidth_deg;
        let del = wrap_deg(toward_elevation_deg - self.elevation_deg) / self.el_beamwidth_deg;
        let gain = self.peak_gain_db - 12.0 * (daz * daz + del * del);
        gain.max(self.peak_gain_db - SIDE_LOBE_FLOOR_DB)
    }
}

/// Index of a beam within its codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BeamId(pub usize);

impl std::fmt::Display for BeamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "b{}", self.0)
    }
}

/// An immutable set of beams: `n_az` boresights uniformly spaced across an
/// azimuth sector, replicated on each elevation row. Beam order is row-major
/// (all azimuths of the first row, then the next row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    beams: Vec<Beam>,
    sector_start_deg: f64,
    sector_end_deg: f64,
    elevation_rows_deg: Vec<f64>,
    n_az: usize,
}

/// Build a codebook with boresights centered in equal azimuth slots:
/// spacing `sector/n_az`, first boresight half a slot in from the sector
/// edge. The sector is centered on azimuth 0.
pub fn build_codebook(
    n_az: usize,
    sector_deg: f64,
    az_beamwidth_deg: f64,
    elevation_rows_deg: &[f64],
    el_beamwidth_deg: f64,
    peak_gain_db: f64,
) -> Result<Codebook, AntennaError> {
    if n_az == 0 {
        return Err(AntennaError::InvalidCodebook("need at least one azimuth beam".into()));
    }
    if sector_deg <= 0.0 {
        return Err(AntennaError::InvalidCodebook(format!(
            "sector must be positive, got {sector_deg}"
        )));
    }
    if !(0.0 < az_beamwidth_deg && az_beamwidth_deg <= 360.0) {
        return Err(AntennaError::InvalidCodebook(format!(
            "azimuth beamwidth out of range: {az_beamwidth_deg}"
        )));
    }
    if !(0.0 < el_beamwidth_deg && el_beamwidth_deg <= 180.0) {
        return Err(AntennaError::InvalidCodebook(format!(
            "elevation beamwidth out of range: {el_beamwidth_deg}"
        )));
    }
    if peak_gain_db < 0.0 {
        return Err(AntennaError::InvalidCodebook(format!(
            "peak gain must be non-negative, got {peak_gain_db}"
        )));
    }
    if elevation_rows_deg.is_empty() {
        return Err(AntennaError::InvalidCodebook("need at least one elevation row".into()));
    }
    for (i, a) in elevation_rows_deg.iter().enumerate() {
        if elevation_rows_deg[..i].iter().any(|b| b == a) {
            return Err(AntennaError::InvalidCodebook(format!(
                "duplicate elevation row {a}"
            )));
        }
    }

    let spacing = sector_deg / n_az as f64;
    let start = -sector_deg / 2.0;
    let mut beams = Vec::with_capacity(n_az * elevation_rows_deg.len());
    for &row in elevation_rows_deg {
        for i in 0..n_az {
            beams.push(Beam {
                azimuth_deg: start + spacing * (i as f64 + 0.5),
                elevation_deg: row,
                az_beamwidth_deg,
                el_beamwidth_deg,
                peak_gain_db,
            });
        }
    }
    Ok(Codebook {
        beams,
        sector_start_deg: start,
        sector_end_deg: -start,
        elevation_rows_deg: elevation_rows_deg.to_vec(),
        n_az,
    })
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn n_az(&self) -> usize {
        self.n_az
    }

    pub fn azimuth_spacing_deg(&self) -> f64 {
        (self.sector_end_deg - self.sector_start_deg) / self.n_az as f64
    }

    pub fn elevation_rows_deg(&self) -> &[f64] {
        &self.elevation_rows_deg
    }

    pub fn sector_deg(&self) -> (f64, f64) {
        (self.sector_start_deg, self.sector_end_deg)
    }

    pub fn beams(&self) -> impl Iterator<Item = (BeamId, &Beam)> {
        self.beams.iter().enumerate().map(|(i, b)| (BeamId(i), b))
    }

    pub fn get(&self, id: BeamId) -> Option<&Beam> {
        self.beams.get(id.0)
    }

    pub fn contains(&self, id: BeamId) -> bool {
        id.0 < self.beams.len()
    }

    /// Beam with the highest gain toward a direction; ties break toward the
    /// lowest index.
    pub fn nearest_beam(&self, azimuth_deg: f64, elevation_deg: f64) -> BeamId {
        let mut best = (BeamId(0), f64::NEG_INFINITY);
        for (id, beam) in self.beams() {
            let g = beam.gain_db(azimuth_deg, elevation_deg);
            if g > best.1 {
                best = (id, g);
            }
        }
        best.0
    }

    /// Beams sharing `beam`'s azimuth boresight whose elevation row differs
    /// by at most `window_deg`, ordered nearest first, the downward neighbor
    /// ahead of the upward one on ties. Empty when the codebook has a single
    /// elevation row.
    pub fn elevation_neighbors(&self, beam: BeamId, window_deg: f64) -> Vec<BeamId> {
        let Some(anchor) = self.get(beam) else {
            return Vec::new();
        };
        let mut neighbors: Vec<(f64, f64, BeamId)> = self
            .beams()
            .filter(|(id, b)| {
                *id != beam
                    && b.azimuth_deg == anchor.azimuth_deg
                    && (b.elevation_deg - anchor.elevation_deg).abs() <= window_deg
                    && b.elevation_deg != anchor.elevation_deg
            })
            .map(|(id, b)| {
                let delta = b.elevation_deg - anchor.elevation_deg;
                (delta.abs(), delta, id)
            })
            .collect();
        // Nearest first; downward (negative delta) before upward at equal
        // distance.
        neighbors.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.partial_cmp(&b.1).unwrap())
        });
        neighbors.into_iter().map(|(_, _, id)| id).collect()
    }

    /// Single-row view: the `n_az` beams of one elevation row as their own
    /// codebook (the classic azimuth-sector sweep).
    pub fn elevation_row(&self, row_deg: f64) -> Option<Codebook> {
        if !self.elevation_rows_deg.contains(&row_deg) {
            return None;
        }
        Some(Codebook {
            beams: self
                .beams
                .iter()
                .filter(|b| b.elevation_deg == row_deg)
                .copied()
                .collect(),
            sector_start_deg: self.sector_start_deg,
            sector_end_deg: self.sector_end_deg,
            elevation_rows_deg: vec![row_deg],
            n_az: self.n_az,
        })
    }

    /// Ids of the full codebook's beams belonging to one elevation row, in
    /// azimuth order.
    pub fn row_beam_ids(&self, row_deg: f64) -> Vec<BeamId> {
        self.beams()
            .filter(|(_, b)| b.elevation_deg == row_deg)
            .map(|(id, _)| id)
            .collect()
    }

    /// Serialize to the documented text schema.
    pub fn dump(&self) -> String {
        toml::to_string_pretty(self).expect("codebook serializes")
    }

    /// Parse a codebook from the text schema produced by [`Codebook::dump`].
    pub fn load(text: &str) -> Result<Codebook, AntennaError> {
        let cb: Codebook = toml::from_str(text).map_err(|e| AntennaError::Parse(e.to_string()))?;
        if cb.beams.is_empty() {
            return Err(AntennaError::Parse("codebook has no beams".into()));
        }
        Ok(cb)
    }
}
