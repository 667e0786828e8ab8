use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use super::{lambertian_order, los_response, norm, PatchTable, PdSpec, RoomScene, UeSpec, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Time binning of an impulse response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcirOptions {
    pub bin_width: f64,
    /// Length of the binned span starting at `t_start`.
    pub window: f64,
    pub t_start: f64,
    /// Fail instead of dropping paths that arrive after the window.
    pub strict: bool,
}

impl Default for OcirOptions {
    fn default() -> Self {
        OcirOptions {
            bin_width: 0.5e-9,
            window: 60e-9,
            t_start: 0.0,
            strict: false,
        }
    }
}

impl OcirOptions {
    pub fn num_bins(&self) -> usize {
        ((self.window / self.bin_width) - 1e-9).ceil() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0) {
            return Err(Error::invalid("binning", "bin width must be positive"));
        }
        if !(self.window >= self.bin_width) {
            return Err(Error::invalid("binning", "window must hold at least one bin"));
        }
        if !self.t_start.is_finite() || self.t_start < 0.0 {
            return Err(Error::invalid("binning", "start time must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Time-binned channel impulse response. Bin `i` holds the DC gain of
/// every path whose delay falls in `[t_start + i·Δt, t_start + (i+1)·Δt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcirProfile {
    pub bin_width: f64,
    pub t_start: f64,
    pub bins: Vec<f64>,
}

impl OcirProfile {
    pub fn dc_gain(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.bin_width
    }

    pub fn first_nonzero(&self) -> Option<usize> {
        self.bins.iter().position(|&g| g != 0.0)
    }

    /// Writes `bin_start_ns,gain` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_start_ns,gain")?;
        for (i, g) in self.bins.iter().enumerate() {
            writeln!(w, "{},{}", self.bin_start(i) * 1e9, g)?;
        }
        Ok(())
    }
}

/// Impulse response between the transmitter and a single photodetector.
pub fn ocir(scene: &RoomScene, ue: &UeSpec, pd: &PdSpec, table: &PatchTable, opts: &OcirOptions) -> Result<OcirProfile> {
    if table.pd.position != pd.position {
        return Err(Error::invalid("patch table", "table was built for a different photodetector"));
    }
    let mut out = ocir_all(scene, ue, std::slice::from_ref(table), opts)?;
    Ok(out.pop().expect("one table in, one profile out"))
}

/// Impulse responses toward every photodetector of `tables` at once.
///
/// The transmitter→patch leg is evaluated once per patch and shared by all
/// receivers. Tables must come from the same scene.
pub fn ocir_all(scene: &RoomScene, ue: &UeSpec, tables: &[PatchTable], opts: &OcirOptions) -> Result<Vec<OcirProfile>> {
    opts.validate()?;
    scene.check_ue(ue)?;
    let Some(first) = tables.first() else {
        return Ok(Vec::new());
    };
    if tables.iter().any(|t| t.surfaces != first.surfaces || t.len() != first.len()) {
        return Err(Error::invalid("patch table", "tables were tiled from different scenes"));
    }
    let m = lambertian_order(ue.half_angle)?;
    let nbins = opts.num_bins();
    let window_end = opts.t_start + opts.window;
    let mut profiles: Vec<OcirProfile> = tables
        .iter()
        .map(|_| OcirProfile {
            bin_width: opts.bin_width,
            t_start: opts.t_start,
            bins: vec![0.0; nbins],
        })
        .collect();

    let bin_of = |delay: f64| -> Result<Option<usize>> {
        let idx = ((delay - opts.t_start) / opts.bin_width).floor();
        if idx < 0.0 {
            return Err(Error::DelayOutsideWindow {
                delay_ns: delay * 1e9,
                window_ns: window_end * 1e9,
            });
        }
        let idx = idx as usize;
        if idx >= nbins {
            if opts.strict {
                return Err(Error::DelayOutsideWindow {
                    delay_ns: delay * 1e9,
                    window_ns: window_end * 1e9,
                });
            }
            return Ok(None);
        }
        Ok(Some(idx))
    };

    for (profile, table) in profiles.iter_mut().zip(tables) {
        let (gain, delay) = los_response(scene, ue, &table.pd)?;
        match bin_of(delay)? {
            Some(i) => profile.bins[i] += gain,
            None => {
                return Err(Error::DelayOutsideWindow {
                    delay_ns: delay * 1e9,
                    window_ns: window_end * 1e9,
                })
            }
        }
    }

    let tx = [ue.position[0], ue.position[1], scene.ue_height];
    let lead = (m + 1.0) / (2.0 * PI);
    let mut k = 0usize;
    for s in &first.surfaces {
        for i in 0..s.n_u {
            for j in 0..s.n_v {
                let p = s.center(i, j);
                let to_patch = [p[0] - tx[0], p[1] - tx[1], p[2] - tx[2]];
                let d1 = norm(to_patch);
                // Transmitter normal is +z.
                let cos_phi = to_patch[2] / d1;
                let cos_alpha = -(s.normal[0] * to_patch[0] + s.normal[1] * to_patch[1] + s.normal[2] * to_patch[2]) / d1;
                if d1 > 0.0 && cos_phi > 0.0 && cos_alpha > 0.0 {
                    let emit = lead * cos_phi.powf(m) * cos_alpha / (d1 * d1);
                    for (profile, table) in profiles.iter_mut().zip(tables) {
                        let g = table.gain[k];
                        if g == 0.0 {
                            continue;
                        }
                        let delay = (d1 + table.path[k]) / SPEED_OF_LIGHT;
                        if let Some(b) = bin_of(delay)? {
                            profile.bins[b] += emit * g;
                        }
                    }
                }
                k += 1;
            }
        }
    }
    Ok(profiles)
}
