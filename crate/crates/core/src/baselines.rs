//! Comparison localizers: closed-form RSS trilateration and a network
//! trained on one DC received-signal-strength value per detector.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::ann::{evaluate_rmse, train, TrainConfig, TrainReport};
use crate::channel::{PdSpec, RoomScene, UeSpec};
use crate::dataset::{split, standardize, FingerprintField, FingerprintRecord, Sampling, StandardizeMode};
use crate::error::{Error, Result};
use crate::signal::{NoiseSpec, PulseSpec};

/// Inversion constants for LOS-only distance estimates with vertically
/// aligned transmitter and receivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrilaterationConfig {
    pub anchors: Vec<PdSpec>,
    pub edge_exclusion: f64,
    pub lambertian_order: f64,
    /// Ceiling height minus transmitter height.
    pub vertical_separation: f64,
    /// `N_p·R_p·E_p`; each anchor multiplies in its own responsivity and area.
    pub source: f64,
    /// Upper clamp on estimated distances.
    pub max_distance: f64,
}

/// A distance estimate and whether it hit a clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceEstimate {
    pub distance: f64,
    pub clamped: bool,
}

impl TrilaterationConfig {
    /// Uses the scene's detectors as anchors.
    pub fn from_scene(scene: &RoomScene, ue: &UeSpec, pulse: &PulseSpec) -> Result<Self> {
        let cfg = TrilaterationConfig {
            anchors: scene.pds.clone(),
            edge_exclusion: 0.5,
            lambertian_order: ue.lambertian_order()?,
            vertical_separation: scene.vertical_separation(),
            source: pulse.num_pulses as f64 * pulse.repetition_rate * pulse.energy,
            max_distance: scene.max_distance(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.len() < 3 {
            return Err(Error::invalid("anchors", format!("need at least 3, got {}", self.anchors.len())));
        }
        if !(self.edge_exclusion >= 0.0) {
            return Err(Error::invalid("edge_exclusion", "must be non-negative"));
        }
        if !(self.vertical_separation > 0.0 && self.max_distance >= self.vertical_separation) {
            return Err(Error::invalid("trilateration", "inconsistent heights"));
        }
        if !(self.source > 0.0 && self.lambertian_order > 0.0) {
            return Err(Error::invalid("trilateration", "source power and Lambertian order must be positive"));
        }
        let (a, _) = normal_matrix(&self.anchors);
        let det = a[0] * a[3] - a[1] * a[2];
        let spread: f64 = a[0] + a[3];
        if det.abs() <= 1e-12 * spread * spread {
            return Err(Error::SingularGeometry("anchors are collinear in the horizontal plane".into()));
        }
        Ok(())
    }

    /// `C = ρ·N_p·R_p·E_p·(m+1)·A_pd / (2π)` of one anchor.
    pub fn scale(&self, anchor: usize) -> f64 {
        let pd = &self.anchors[anchor];
        pd.responsivity * self.source * (self.lambertian_order + 1.0) * pd.area / (2.0 * PI)
    }

    pub fn distance(&self, anchor: usize, power: f64) -> Result<DistanceEstimate> {
        rss_to_distance(
            power,
            self.scale(anchor),
            self.lambertian_order,
            self.vertical_separation,
            self.max_distance,
        )
    }
}

/// Inverts `P = C·h^{m+1}/d^{m+3}` and clamps the result to `[h, max]`.
pub fn rss_to_distance(power: f64, scale: f64, m: f64, h: f64, max_distance: f64) -> Result<DistanceEstimate> {
    if !(power > 0.0) {
        return Err(Error::NonPositivePower(power));
    }
    let d = (scale * h.powf(m + 1.0) / power).powf(1.0 / (m + 3.0));
    Ok(if d < h {
        DistanceEstimate { distance: h, clamped: true }
    } else if d > max_distance {
        DistanceEstimate { distance: max_distance, clamped: true }
    } else {
        DistanceEstimate { distance: d, clamped: false }
    })
}

/// Rows of the linearized system: anchor `i` minus the last anchor.
fn linear_rows(anchors: &[PdSpec]) -> Vec<[f64; 2]> {
    let last = anchors[anchors.len() - 1].position;
    anchors[..anchors.len() - 1]
        .iter()
        .map(|a| [2.0 * (last[0] - a.position[0]), 2.0 * (last[1] - a.position[1])])
        .collect()
}

fn normal_matrix(anchors: &[PdSpec]) -> ([f64; 4], Vec<[f64; 2]>) {
    let rows = linear_rows(anchors);
    let mut a = [0.0; 4];
    for r in &rows {
        a[0] += r[0] * r[0];
        a[1] += r[0] * r[1];
        a[2] += r[1] * r[0];
        a[3] += r[1] * r[1];
    }
    (a, rows)
}

/// Horizontal position from one received power per anchor. With three
/// anchors the linear system is square and solved exactly; more anchors
/// give its least-squares solution.
pub fn trilaterate(powers: &[f64], cfg: &TrilaterationConfig) -> Result<[f64; 2]> {
    if powers.len() != cfg.anchors.len() {
        return Err(Error::DimensionMismatch { expected: cfg.anchors.len(), actual: powers.len() });
    }
    let h2 = cfg.vertical_separation * cfg.vertical_separation;
    let r2: Vec<f64> = powers
        .iter()
        .enumerate()
        .map(|(i, &p)| cfg.distance(i, p).map(|d| (d.distance * d.distance - h2).max(0.0)))
        .collect::<Result<_>>()?;
    let n = cfg.anchors.len() - 1;
    let last = cfg.anchors[n].position;
    let (a, rows) = normal_matrix(&cfg.anchors);
    let mut rhs = [0.0; 2];
    for (i, row) in rows.iter().enumerate() {
        let p = cfg.anchors[i].position;
        let b = r2[i] - r2[n] - p[0] * p[0] + last[0] * last[0] - p[1] * p[1] + last[1] * last[1];
        rhs[0] += row[0] * b;
        rhs[1] += row[1] * b;
    }
    let det = a[0] * a[3] - a[1] * a[2];
    let spread = a[0] + a[3];
    if det.abs() <= 1e-12 * spread * spread {
        return Err(Error::SingularGeometry("anchors are collinear in the horizontal plane".into()));
    }
    Ok([(a[3] * rhs[0] - a[1] * rhs[1]) / det, (a[0] * rhs[1] - a[2] * rhs[0]) / det])
}

/// Three anchors on an equilateral triangle centered on the ceiling with
/// circumradius a quarter of the shorter room side.
pub fn default_anchor_layout(scene: &RoomScene) -> Vec<[f64; 2]> {
    let r = scene.length.min(scene.width) / 4.0;
    (0..3)
        .map(|k| {
            let a = PI / 2.0 + k as f64 * 2.0 * PI / 3.0;
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

/// Trilateration RMSE (cm) over the field locations at least
/// `edge_exclusion` from every wall. `anchors` index the field's detectors.
pub fn trilateration_rmse(
    field: &FingerprintField,
    anchors: &[usize],
    pulse: &PulseSpec,
    noise: &NoiseSpec,
    edge_exclusion: f64,
) -> Result<f64> {
    let scene = &field.scene;
    let (hl, hw) = (scene.length / 2.0 - edge_exclusion, scene.width / 2.0 - edge_exclusion);
    let interior: Vec<usize> = field
        .positions
        .iter()
        .enumerate()
        .filter(|(_, p)| p[0].abs() <= hl + 1e-9 && p[1].abs() <= hw + 1e-9)
        .map(|(i, _)| i)
        .collect();
    if interior.is_empty() {
        return Err(Error::EmptyGrid("no locations inside the edge exclusion".into()));
    }
    if let Some(&bad) = anchors.iter().find(|&&q| q >= scene.pds.len()) {
        return Err(Error::invalid("anchors", format!("index {bad} out of range")));
    }
    let anchor_scene = scene.clone().with_pds(anchors.iter().map(|&q| scene.pds[q]).collect());
    let mut cfg = TrilaterationConfig::from_scene(&anchor_scene, &field.ue, pulse)?;
    cfg.edge_exclusion = edge_exclusion;
    cfg.validate()?;
    let set = field.unit_samples_at(anchors, pulse, Sampling::Dc, Some(&interior))?;
    let records = set.realize(field, pulse, noise);
    let window = set.sampler.window;
    let mut sum = 0.0;
    for r in &records {
        // Window-averaged current back to accumulated LOS power units.
        let powers: Vec<f64> = r.features.iter().map(|&dc| (dc * window).max(f64::MIN_POSITIVE)).collect();
        let est = trilaterate(&powers, &cfg)?;
        sum += (est[0] - r.label[0]).powi(2) + (est[1] - r.label[1]).powi(2);
    }
    Ok((sum / records.len() as f64).sqrt() * 100.0)
}

/// Splits, standardizes, trains and reports the test RMSE (cm).
pub fn ann_rmse(
    records: Vec<FingerprintRecord>,
    split_seed: u64,
    mode: StandardizeMode,
    cfg: &TrainConfig,
) -> Result<(f64, TrainReport)> {
    let ds = standardize(split(records, split_seed)?, mode)?;
    let (model, report) = train(&ds, cfg)?;
    Ok((evaluate_rmse(&model, &ds.test)?, report))
}

/// Network over one DC value per detector. `pds` must select three
/// detectors of the field.
pub fn dc_rss_ann_pipeline(
    field: &FingerprintField,
    pds: &[usize],
    pulse: &PulseSpec,
    noise: &NoiseSpec,
    split_seed: u64,
    mode: StandardizeMode,
    cfg: &TrainConfig,
) -> Result<(f64, TrainReport)> {
    if pds.len() != 3 {
        return Err(Error::invalid("DC-RSS detectors", format!("need 3, got {}", pds.len())));
    }
    let records = field.unit_samples(pds, pulse, Sampling::Dc)?.realize(field, pulse, noise);
    ann_rmse(records, split_seed, mode, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{los_response, Surfaces};
    use approx::assert_relative_eq;

    fn scene3() -> RoomScene {
        let s = RoomScene::representative();
        let pds = default_anchor_layout(&s).iter().map(|p| PdSpec::representative(p[0], p[1], s.height)).collect();
        s.with_pds(pds)
    }

    fn pulse() -> PulseSpec {
        PulseSpec { energy: 1e-6, width: 10e-9, repetition_rate: 1e5, num_pulses: 1000 }
    }

    fn cfg() -> TrilaterationConfig {
        let s = scene3();
        TrilaterationConfig::from_scene(&s, &UeSpec::representative(0.0, 0.0), &pulse()).unwrap()
    }

    #[test]
    fn nadir_inverts_to_height() {
        let c = cfg();
        let (m, h) = (c.lambertian_order, c.vertical_separation);
        let p = c.scale(0) * h.powf(m + 1.0) / h.powf(m + 3.0);
        let d = c.distance(0, p).unwrap();
        assert_relative_eq!(d.distance, h, max_relative = 1e-14);
        assert!(!d.clamped);
    }

    #[test]
    fn fourth_power_law_for_unit_order() {
        let h = 2.0;
        let p = |d: f64| 3.0 * h * h / d.powi(4);
        assert_relative_eq!(p(2.5) / p(5.0), 16.0, max_relative = 1e-14);
        let d = rss_to_distance(p(5.0), 3.0, 1.0, h, 10.0).unwrap();
        assert_relative_eq!(d.distance, 5.0, max_relative = 1e-14);
    }

    #[test]
    fn clamps_and_errors() {
        let c = cfg();
        let far = c.distance(0, 1e-30).unwrap();
        assert!(far.clamped);
        assert_eq!(far.distance, c.max_distance);
        let near = c.distance(0, 1e30).unwrap();
        assert!(near.clamped);
        assert_eq!(near.distance, c.vertical_separation);
        assert!(matches!(c.distance(0, 0.0), Err(Error::NonPositivePower(_))));
        assert!(matches!(c.distance(0, -1.0), Err(Error::NonPositivePower(_))));
    }

    #[test]
    fn distance_decreases_with_power() {
        let c = cfg();
        let ds: Vec<f64> = (1..50).map(|k| c.distance(0, k as f64 * 1e-4).unwrap().distance).collect();
        assert!(ds.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn exact_powers_recover_position() {
        let s = scene3();
        let c = cfg();
        let ue = UeSpec::representative(0.0, 0.0);
        for &(x, y) in &[(0.0, 0.0), (1.3, -0.7), (-1.9, 1.8), (0.2, 1.1)] {
            let powers: Vec<f64> = s
                .pds
                .iter()
                .map(|pd| {
                    let (g, _) = los_response(&s, &ue.at(x, y), pd).unwrap();
                    g * c.source * pd.responsivity
                })
                .collect();
            let est = trilaterate(&powers, &c).unwrap();
            assert!((est[0] - x).abs() < 1e-9 && (est[1] - y).abs() < 1e-9, "{est:?} vs {x},{y}");
        }
    }

    #[test]
    fn symmetric_layout_keeps_axis() {
        let s = scene3();
        let c = cfg();
        let ue = UeSpec::representative(0.0, 0.0);
        // The first anchor sits on x = 0, the other two mirror each other.
        let powers: Vec<f64> =
            s.pds.iter().map(|pd| los_response(&s, &ue.at(0.0, -0.8), pd).unwrap().0 * c.source * pd.responsivity).collect();
        let est = trilaterate(&powers, &c).unwrap();
        assert!(est[0].abs() < 1e-12);
    }

    #[test]
    fn collinear_anchors_are_singular() {
        let mut c = cfg();
        for (i, a) in c.anchors.iter_mut().enumerate() {
            a.position = [i as f64 * 0.5, i as f64 * 0.5, 3.0];
        }
        assert!(matches!(c.validate(), Err(Error::SingularGeometry(_))));
        assert!(matches!(trilaterate(&[1.0, 1.0, 1.0], &c), Err(Error::SingularGeometry(_))));
    }

    #[test]
    fn least_squares_with_four_anchors() {
        let mut s = scene3();
        s.pds.push(PdSpec::representative(1.0, -1.2, 3.0));
        let c = TrilaterationConfig::from_scene(&s, &UeSpec::representative(0.0, 0.0), &pulse()).unwrap();
        let ue = UeSpec::representative(0.5, 0.4);
        let powers: Vec<f64> =
            s.pds.iter().map(|pd| los_response(&s, &ue, pd).unwrap().0 * c.source * pd.responsivity).collect();
        let est = trilaterate(&powers, &c).unwrap();
        assert!((est[0] - 0.5).abs() < 1e-9 && (est[1] - 0.4).abs() < 1e-9);
    }

    #[test]
    fn reflections_degrade_trilateration() {
        let mut s = scene3();
        s.length = 4.0;
        s.width = 4.0;
        s.patch_area = 0.1 * 0.1;
        let ue = UeSpec::representative(0.0, 0.0);
        let grid = crate::dataset::generate_grid(&s, &crate::dataset::GridSpec { spacing: 0.25, margin: 0.5, seed: 0 }).unwrap();
        let opts = crate::channel::OcirOptions::default();
        let field = FingerprintField::trace(&s, &ue, &grid, &opts).unwrap();
        let p = PulseSpec { width: 2e-9, ..pulse() };
        let walls = trilateration_rmse(&field, &[0, 1, 2], &p, &NoiseSpec::silent(), 0.5).unwrap();
        s.surfaces = Surfaces::none();
        let field = FingerprintField::trace(&s, &ue, &grid, &opts).unwrap();
        let clean = trilateration_rmse(&field, &[0, 1, 2], &p, &NoiseSpec::silent(), 0.5).unwrap();
        assert!(clean < 1e-3, "LOS-only RMSE {clean} cm");
        assert!(walls > 30.0, "RMSE with reflections {walls} cm");
    }
}
