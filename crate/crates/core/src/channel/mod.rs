//! Indoor optical wireless channel: line-of-sight plus one-bounce wall
//! reflections between an upward-facing LED transmitter and downward-facing
//! ceiling photodetectors.
//!
//! Coordinates are meters with the origin at the center of the floor:
//! `x ∈ [-length/2, length/2]`, `y ∈ [-width/2, width/2]`, `z ∈ [0, height]`.
//! Angles are radians, times are seconds.

mod ocir;
mod patches;

pub use ocir::{ocir, ocir_all, OcirOptions, OcirProfile};
pub use patches::{build_patch_table, build_patch_table_capped, PatchTable, SurfaceKind, SurfaceTiling, DEFAULT_PATCH_CAP};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const POSITION_TOLERANCE: f64 = 1e-9;

/// Reflectivity of each room surface. `None` disables the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surfaces {
    /// Wall at `x = -length/2`.
    pub west: Option<f64>,
    /// Wall at `x = +length/2`.
    pub east: Option<f64>,
    /// Wall at `y = -width/2`.
    pub south: Option<f64>,
    /// Wall at `y = +width/2`.
    pub north: Option<f64>,
    pub floor: Option<f64>,
    pub ceiling: Option<f64>,
}

impl Surfaces {
    /// The four walls at a common reflectivity; floor and ceiling disabled.
    pub fn walls(reflectivity: f64) -> Self {
        Surfaces {
            west: Some(reflectivity),
            east: Some(reflectivity),
            south: Some(reflectivity),
            north: Some(reflectivity),
            floor: None,
            ceiling: None,
        }
    }

    pub fn none() -> Self {
        Surfaces {
            west: None,
            east: None,
            south: None,
            north: None,
            floor: None,
            ceiling: None,
        }
    }

    pub fn get(&self, kind: SurfaceKind) -> Option<f64> {
        match kind {
            SurfaceKind::West => self.west,
            SurfaceKind::East => self.east,
            SurfaceKind::South => self.south,
            SurfaceKind::North => self.north,
            SurfaceKind::Floor => self.floor,
            SurfaceKind::Ceiling => self.ceiling,
        }
    }

    /// Multiplies every enabled reflectivity by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |r: Option<f64>| r.map(|r| r * factor);
        Surfaces {
            west: s(self.west),
            east: s(self.east),
            south: s(self.south),
            north: s(self.north),
            floor: s(self.floor),
            ceiling: s(self.ceiling),
        }
    }
}

/// A ceiling photodetector facing straight down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdSpec {
    pub position: [f64; 3],
    /// Active area, m².
    pub area: f64,
    /// Field-of-view half angle.
    pub fov: f64,
    /// A/W.
    pub responsivity: f64,
    /// 3-dB bandwidth of the receiver's first-order low-pass response, Hz.
    pub bandwidth: f64,
}

impl PdSpec {
    /// Representative receiver (1 cm², 85° FOV, 0.54 A/W, 500 MHz) at `(x, y)`
    /// on a ceiling of the given height.
    pub fn representative(x: f64, y: f64, ceiling: f64) -> Self {
        PdSpec {
            position: [x, y, ceiling],
            area: 1e-4,
            fov: 85f64.to_radians(),
            responsivity: 0.54,
            bandwidth: 500e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.area > 0.0) {
            return Err(Error::invalid("photodetector", format!("area {} must be positive", self.area)));
        }
        if !(self.fov > 0.0 && self.fov <= PI / 2.0) {
            return Err(Error::Domain { what: "photodetector field of view", value: self.fov });
        }
        if !(self.responsivity > 0.0) {
            return Err(Error::invalid("photodetector", "responsivity must be positive"));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::invalid("photodetector", "bandwidth must be positive"));
        }
        Ok(())
    }
}

/// The mobile transmitter: an upward-facing Lambertian LED.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeSpec {
    /// Horizontal position; the height comes from the scene.
    pub position: [f64; 2],
    /// Half-power semi-angle.
    pub half_angle: f64,
    /// 3-dB bandwidth of the LED's first-order low-pass response, Hz.
    pub led_bandwidth: f64,
}

impl UeSpec {
    /// 60° half-power angle, 500 MHz LED.
    pub fn representative(x: f64, y: f64) -> Self {
        UeSpec {
            position: [x, y],
            half_angle: 60f64.to_radians(),
            led_bandwidth: 500e6,
        }
    }

    pub fn at(&self, x: f64, y: f64) -> Self {
        UeSpec { position: [x, y], ..*self }
    }

    pub fn lambertian_order(&self) -> Result<f64> {
        lambertian_order(self.half_angle)
    }
}

/// Room geometry, surface reflectivities and the photodetector anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomScene {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub surfaces: Surfaces,
    /// Target reflecting element area, m².
    pub patch_area: f64,
    pub pds: Vec<PdSpec>,
    /// Height of the transmitter plane.
    pub ue_height: f64,
}

impl RoomScene {
    /// Representative 5×5×3 m room with four 0.8-reflectivity walls, a
    /// (5 cm)² reflecting element and no photodetectors.
    pub fn representative() -> Self {
        RoomScene {
            length: 5.0,
            width: 5.0,
            height: 3.0,
            surfaces: Surfaces::walls(0.8),
            patch_area: 0.05 * 0.05,
            pds: Vec::new(),
            ue_height: 0.85,
        }
    }

    pub fn with_pds(mut self, pds: Vec<PdSpec>) -> Self {
        self.pds = pds;
        self
    }

    /// Vertical separation between the transmitter plane and the ceiling.
    pub fn vertical_separation(&self) -> f64 {
        self.height - self.ue_height
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("length", self.length), ("width", self.width), ("height", self.height)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("room", format!("{name} {v} must be positive")));
            }
        }
        if !(self.patch_area > 0.0) {
            return Err(Error::invalid("room", "patch area must be positive"));
        }
        for kind in SurfaceKind::ALL {
            if let Some(r) = self.surfaces.get(kind) {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::Domain { what: "surface reflectivity", value: r });
                }
            }
        }
        if !(self.ue_height >= 0.0 && self.ue_height < self.height) {
            return Err(Error::invalid(
                "room",
                format!("transmitter height {} must lie in [0, {})", self.ue_height, self.height),
            ));
        }
        for (i, pd) in self.pds.iter().enumerate() {
            pd.validate()?;
            let [x, y, z] = pd.position;
            if (z - self.height).abs() > POSITION_TOLERANCE {
                return Err(Error::invalid(
                    "photodetector",
                    format!("PD {i} at z = {z} is not on the ceiling (z = {})", self.height),
                ));
            }
            if !self.contains(x, y) {
                return Err(Error::invalid(
                    "photodetector",
                    format!("PD {i} at ({x}, {y}) lies outside the room"),
                ));
            }
        }
        Ok(())
    }

    /// Whether `(x, y)` lies within the closed room footprint.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.length / 2.0 + POSITION_TOLERANCE && y.abs() <= self.width / 2.0 + POSITION_TOLERANCE
    }

    pub(crate) fn check_ue(&self, ue: &UeSpec) -> Result<()> {
        let [x, y] = ue.position;
        if !self.contains(x, y) {
            return Err(Error::invalid("transmitter", format!("({x}, {y}) lies outside the room")));
        }
        if !(ue.led_bandwidth > 0.0) {
            return Err(Error::invalid("transmitter", "LED bandwidth must be positive"));
        }
        lambertian_order(ue.half_angle).map(|_| ())
    }

    /// Horizontal-plane diagonal extended by the vertical separation: the
    /// longest possible transmitter–photodetector distance.
    pub fn max_distance(&self) -> f64 {
        let h = self.vertical_separation();
        (self.length * self.length + self.width * self.width + h * h).sqrt()
    }
}

/// Lambertian emission order `m = -ln 2 / ln(cos Φ½)` for a half-power
/// semi-angle `Φ½ ∈ (0, π/2)`.
pub fn lambertian_order(half_angle: f64) -> Result<f64> {
    if !(half_angle > 0.0 && half_angle < PI / 2.0) {
        return Err(Error::Domain { what: "half-power angle", value: half_angle });
    }
    let m = -std::f64::consts::LN_2 / half_angle.cos().ln();
    if !m.is_finite() {
        return Err(Error::Domain { what: "half-power angle", value: half_angle });
    }
    Ok(m)
}

/// Direct-path DC gain and delay between the transmitter and one ceiling
/// photodetector.
///
/// `gain = (m+1)·A·cos^m(φ)·cos(ψ) / (2π d²)` when the incidence angle `ψ` is
/// inside the receiver field of view, zero otherwise. Both devices are
/// vertical, so `cos φ = cos ψ = Δz / d`.
pub fn los_response(scene: &RoomScene, ue: &UeSpec, pd: &PdSpec) -> Result<(f64, f64)> {
    scene.check_ue(ue)?;
    let m = lambertian_order(ue.half_angle)?;
    let tx = [ue.position[0], ue.position[1], scene.ue_height];
    let v = [pd.position[0] - tx[0], pd.position[1] - tx[1], pd.position[2] - tx[2]];
    let d = norm(v);
    if !(d > 0.0) {
        return Err(Error::invalid("transmitter", "coincides with a photodetector"));
    }
    let cos = v[2] / d;
    let gain = if cos > 0.0 && cos >= pd.fov.cos() {
        (m + 1.0) * pd.area * cos.powf(m) * cos / (2.0 * PI * d * d)
    } else {
        0.0
    };
    Ok((gain, d / SPEED_OF_LIGHT))
}

#[inline]
pub(crate) fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[inline]
pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lambertian_order_values() {
        assert_relative_eq!(lambertian_order(60f64.to_radians()).unwrap(), 1.0, max_relative = 1e-12);
        // -ln2 / ln(cos 30°) = 0.693147 / 0.143841
        assert_relative_eq!(lambertian_order(30f64.to_radians()).unwrap(), 4.818841, max_relative = 1e-6);
        assert!(lambertian_order(PI / 2.0).is_err());
        assert!(lambertian_order(0.0).is_err());
        assert!(lambertian_order(-0.1).is_err());
        assert!(lambertian_order(f64::NAN).is_err());
        let near = lambertian_order(PI / 2.0 - 1e-6).unwrap();
        assert!(near > 0.0 && near < 0.06);
    }

    #[test]
    fn lambertian_order_decreasing() {
        let mut prev = f64::INFINITY;
        for deg in 1..90 {
            let m = lambertian_order((deg as f64).to_radians()).unwrap();
            assert!(m < prev);
            if deg <= 60 {
                assert!(m >= 1.0 - 1e-12);
            }
            prev = m;
        }
    }

    fn nadir_scene() -> (RoomScene, UeSpec, PdSpec) {
        let mut scene = RoomScene::representative();
        scene.ue_height = 1.0;
        let pd = PdSpec::representative(0.0, 0.0, 3.0);
        scene.pds = vec![pd];
        (scene, UeSpec::representative(0.0, 0.0), pd)
    }

    #[test]
    fn los_directly_below() {
        let (scene, ue, pd) = nadir_scene();
        let (gain, delay) = los_response(&scene, &ue, &pd).unwrap();
        // 2·1e-4 / (2π·4)
        assert_relative_eq!(gain, 7.957747e-6, max_relative = 1e-6);
        assert_relative_eq!(delay, 2.0 / SPEED_OF_LIGHT, max_relative = 1e-15);
        assert_relative_eq!(delay, 6.671e-9, max_relative = 1e-3);
    }

    #[test]
    fn los_delay_three_meters() {
        let mut scene = RoomScene::representative();
        scene.ue_height = 0.0;
        let pd = PdSpec::representative(0.0, 0.0, 3.0);
        let (_, delay) = los_response(&scene, &UeSpec::representative(0.0, 0.0), &pd).unwrap();
        assert_relative_eq!(delay, 10.0e-9, max_relative = 1e-3);
    }

    #[test]
    fn los_outside_fov_is_zero() {
        let (scene, _, mut pd) = nadir_scene();
        pd.fov = 20f64.to_radians();
        // 2 m vertical, 2 m horizontal: incidence 45°
        let (gain, delay) = los_response(&scene, &UeSpec::representative(2.0, 0.0), &pd).unwrap();
        assert_eq!(gain, 0.0);
        assert!(delay > 0.0);
        pd.fov = 46f64.to_radians();
        let (gain, _) = los_response(&scene, &UeSpec::representative(2.0, 0.0), &pd).unwrap();
        assert!(gain > 0.0);
    }

    #[test]
    fn scene_validation() {
        let mut scene = RoomScene::representative().with_pds(vec![PdSpec::representative(0.0, 0.0, 3.0)]);
        scene.validate().unwrap();
        scene.pds[0].position[2] = 2.9;
        assert!(scene.validate().is_err());
        scene.pds[0].position = [3.0, 0.0, 3.0];
        assert!(scene.validate().is_err());
        scene.pds[0].position = [0.0, 0.0, 3.0];
        scene.surfaces.west = Some(1.2);
        assert!(scene.validate().is_err());
        scene.surfaces.west = Some(0.8);
        scene.ue_height = 3.0;
        assert!(scene.validate().is_err());
        scene.ue_height = 0.85;
        scene.patch_area = 0.0;
        assert!(scene.validate().is_err());
    }
}
