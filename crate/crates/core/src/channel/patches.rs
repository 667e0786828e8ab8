//! Wall tiling and the per-photodetector half of the one-bounce sum.
//!
//! The reflected-path gain of patch `k` factors into a transmitter leg that
//! depends on the UE position and a patch→PD leg that does not. The
//! [`PatchTable`] stores the second leg once per photodetector.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{dot, norm, PdSpec, RoomScene};
use crate::error::{Error, Result};

/// Default upper bound on the number of patches in a single table.
pub const DEFAULT_PATCH_CAP: u64 = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurfaceKind {
    West,
    East,
    South,
    North,
    Floor,
    Ceiling,
}

impl SurfaceKind {
    pub const ALL: [SurfaceKind; 6] = [
        SurfaceKind::West,
        SurfaceKind::East,
        SurfaceKind::South,
        SurfaceKind::North,
        SurfaceKind::Floor,
        SurfaceKind::Ceiling,
    ];
}

/// A rectangular surface cut into `n_u × n_v` equal patches.
///
/// Patch `(i, j)` is centered at `origin + (i+½)·du·u + (j+½)·dv·v` and is
/// stored at flat index `i·n_v + j` within the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceTiling {
    pub kind: SurfaceKind,
    pub reflectivity: f64,
    pub origin: [f64; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
    /// Unit normal pointing into the room.
    pub normal: [f64; 3],
    pub n_u: usize,
    pub n_v: usize,
    pub du: f64,
    pub dv: f64,
}

impl SurfaceTiling {
    pub fn patch_count(&self) -> usize {
        self.n_u * self.n_v
    }

    pub fn patch_area(&self) -> f64 {
        self.du * self.dv
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 3] {
        let a = (i as f64 + 0.5) * self.du;
        let b = (j as f64 + 0.5) * self.dv;
        [
            self.origin[0] + a * self.u[0] + b * self.v[0],
            self.origin[1] + a * self.u[1] + b * self.v[1],
            self.origin[2] + a * self.u[2] + b * self.v[2],
        ]
    }
}

/// Number of equal divisions of `extent` whose size does not exceed `side`.
fn divisions(extent: f64, side: f64) -> usize {
    ((extent / side) - 1e-9).ceil().max(1.0) as usize
}

/// Tiles every enabled surface of the scene with patches no larger than
/// the scene's reflecting element area.
pub(crate) fn tile_surfaces(scene: &RoomScene) -> Vec<SurfaceTiling> {
    let side = scene.patch_area.sqrt();
    let (hl, hw, h) = (scene.length / 2.0, scene.width / 2.0, scene.height);
    let mut out = Vec::new();
    for kind in SurfaceKind::ALL {
        let Some(reflectivity) = scene.surfaces.get(kind) else {
            continue;
        };
        // (origin, u, v, normal, extent_u, extent_v)
        let (origin, u, v, normal, eu, ev) = match kind {
            SurfaceKind::West => ([-hl, -hw, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], scene.width, h),
            SurfaceKind::East => ([hl, -hw, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], scene.width, h),
            SurfaceKind::South => ([-hl, -hw, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0], scene.length, h),
            SurfaceKind::North => ([-hl, hw, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0], scene.length, h),
            SurfaceKind::Floor => ([-hl, -hw, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], scene.length, scene.width),
            SurfaceKind::Ceiling => ([-hl, -hw, h], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0], scene.length, scene.width),
        };
        let n_u = divisions(eu, side);
        let n_v = divisions(ev, side);
        out.push(SurfaceTiling {
            kind,
            reflectivity,
            origin,
            u,
            v,
            normal,
            n_u,
            n_v,
            du: eu / n_u as f64,
            dv: ev / n_v as f64,
        });
    }
    out
}

/// Precomputed patch→photodetector leg of every reflecting patch.
///
/// `gain[k] = ρ_wall · ΔA · A_pd · cos β · cos ψ / (π d₂²)` when the incidence
/// angle `ψ` lies inside the receiver field of view and the patch faces the
/// receiver, zero otherwise. `path[k]` is the patch→PD distance `d₂`.
#[derive(Debug, Clone)]
pub struct PatchTable {
    pub pd: PdSpec,
    pub surfaces: Vec<SurfaceTiling>,
    pub gain: Vec<f64>,
    pub path: Vec<f64>,
}

impl PatchTable {
    pub fn len(&self) -> usize {
        self.gain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gain.is_empty()
    }

    /// Center and inward normal of every patch, in table order.
    pub fn patches(&self) -> impl Iterator<Item = ([f64; 3], [f64; 3])> + '_ {
        self.surfaces.iter().flat_map(|s| {
            (0..s.n_u).flat_map(move |i| (0..s.n_v).map(move |j| (s.center(i, j), s.normal)))
        })
    }
}

/// Builds the patch table of one photodetector with the default patch cap.
pub fn build_patch_table(scene: &RoomScene, pd: &PdSpec) -> Result<PatchTable> {
    build_patch_table_capped(scene, pd, DEFAULT_PATCH_CAP)
}

pub fn build_patch_table_capped(scene: &RoomScene, pd: &PdSpec, cap: u64) -> Result<PatchTable> {
    scene.validate()?;
    pd.validate()?;
    let surfaces = tile_surfaces(scene);
    let count: u64 = surfaces.iter().map(|s| s.patch_count() as u64).sum();
    if count > cap {
        return Err(Error::PatchCapExceeded { count, cap });
    }
    let count = count as usize;
    let mut gain = Vec::new();
    let mut path = Vec::new();
    gain.try_reserve_exact(count).map_err(|_| Error::PatchCapExceeded { count: count as u64, cap })?;
    path.try_reserve_exact(count).map_err(|_| Error::PatchCapExceeded { count: count as u64, cap })?;

    let cos_fov = pd.fov.cos();
    let rx = pd.position;
    for s in &surfaces {
        let scale = s.reflectivity * s.patch_area() * pd.area / PI;
        for i in 0..s.n_u {
            for j in 0..s.n_v {
                let p = s.center(i, j);
                let to_pd = [rx[0] - p[0], rx[1] - p[1], rx[2] - p[2]];
                let d2 = norm(to_pd);
                let cos_beta = dot(s.normal, to_pd) / d2;
                // PD normal is -z; incidence cosine is the downward component.
                let cos_psi = to_pd[2] / d2;
                let g = if d2 > 0.0 && cos_beta > 0.0 && cos_psi > 0.0 && cos_psi >= cos_fov {
                    scale * cos_beta * cos_psi / (d2 * d2)
                } else {
                    0.0
                };
                gain.push(g);
                path.push(d2);
            }
        }
    }
    Ok(PatchTable { pd: *pd, surfaces, gain, path })
}
