//! Per-tile A-buffer: depth-sorted fragment lists of volumes of interest.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::camera::{Camera, CameraFrame};
use crate::math::{Point3, Vec3};
use crate::tree::VolumeOfInterest;

pub const TILE_SIZE: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub width: u32,
    pub height: u32,
    pub tiles_x: u32,
    pub tiles_y: u32,
}

impl TileGrid {
    pub fn new(width: u32, height: u32) -> TileGrid {
        TileGrid {
            width,
            height,
            tiles_x: width.div_ceil(TILE_SIZE),
            tiles_y: height.div_ceil(TILE_SIZE),
        }
    }

    pub fn for_camera(camera: &Camera) -> TileGrid {
        TileGrid::new(camera.width, camera.height)
    }

    pub fn tile_count(&self) -> usize {
        (self.tiles_x * self.tiles_y) as usize
    }

    pub fn tile_of(&self, px: u32, py: u32) -> usize {
        ((py / TILE_SIZE) * self.tiles_x + px / TILE_SIZE) as usize
    }

    /// Pixels of tile `tile` that lie inside the image, row-major.
    pub fn pixels(&self, tile: usize) -> impl Iterator<Item = (u32, u32)> + '_ {
        let tx = tile as u32 % self.tiles_x;
        let ty = tile as u32 / self.tiles_x;
        let (x0, y0) = (tx * TILE_SIZE, ty * TILE_SIZE);
        let (x1, y1) = ((x0 + TILE_SIZE).min(self.width), (y0 + TILE_SIZE).min(self.height));
        (y0..y1).flat_map(move |y| (x0..x1).map(move |x| (x, y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub primitive: u32,
    pub z_entry: f32,
    pub z_exit: f32,
}

fn fragment_order(a: &Fragment, b: &Fragment) -> Ordering {
    a.z_entry.total_cmp(&b.z_entry).then(a.primitive.cmp(&b.primitive))
}

/// Inserts after every fragment that does not order after `frag`.
pub fn insert_sorted(list: &mut Vec<Fragment>, frag: Fragment) {
    let at = list.partition_point(|f| fragment_order(f, &frag) != Ordering::Greater);
    list.insert(at, frag);
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileABuffer {
    pub grid: TileGrid,
    lists: Vec<Vec<Fragment>>,
}

impl TileABuffer {
    pub fn empty(grid: TileGrid) -> TileABuffer {
        TileABuffer { grid, lists: vec![Vec::new(); grid.tile_count()] }
    }

    pub fn list(&self, tile: usize) -> &[Fragment] {
        &self.lists[tile]
    }

    pub fn lists(&self) -> &[Vec<Fragment>] {
        &self.lists
    }

    pub fn insert(&mut self, tile: usize, frag: Fragment) {
        insert_sorted(&mut self.lists[tile], frag);
    }

    pub fn fragment_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn counts(&self) -> Vec<u32> {
        self.lists.iter().map(|l| l.len() as u32).collect()
    }
}

/// Ray/volume interval clipped to `[t_min, t_max]`.
pub fn ray_volume_intersect(
    origin: Point3,
    dir: Vec3,
    volume: &VolumeOfInterest,
    t_min: f32,
    t_max: f32,
) -> Option<(f32, f32)> {
    let (a, b) = volume.shape.intersect_ray(origin, dir)?;
    let (a, b) = (a.max(t_min), b.min(t_max));
    (a <= b).then_some((a, b))
}

/// Per-pixel ray directions and their cosine with the view axis.
#[derive(Debug, Clone)]
pub struct PixelRays {
    pub dirs: Vec<Vec3>,
    pub cos: Vec<f32>,
    pub width: u32,
}

impl PixelRays {
    pub fn new(camera: &Camera, frame: &CameraFrame) -> PixelRays {
        let mut dirs = Vec::with_capacity((camera.width * camera.height) as usize);
        for y in 0..camera.height {
            for x in 0..camera.width {
                dirs.push(camera.pixel_ray(frame, x, y));
            }
        }
        let cos = dirs.iter().map(|d| d.dot(frame.forward)).collect();
        PixelRays { dirs, cos, width: camera.width }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> (Vec3, f32) {
        let i = (y * self.width + x) as usize;
        (self.dirs[i], self.cos[i])
    }
}

/// Conservative NDC depth of a ray distance: entries round down, exits round up.
pub fn ndc_entry(camera: &Camera, t: f32, cos: f32) -> f32 {
    camera.view_depth_to_ndc(t * cos).next_down().clamp(0.0, 1.0)
}

pub fn ndc_exit(camera: &Camera, t: f32, cos: f32) -> f32 {
    camera.view_depth_to_ndc(t * cos).next_up().clamp(0.0, 1.0)
}

/// Inclusive tile rectangle possibly covered by the volume, `None` when off-screen.
fn tile_rect(camera: &Camera, frame: &CameraFrame, grid: &TileGrid, vol: &VolumeOfInterest) -> Option<(u32, u32, u32, u32)> {
    let full = (0, 0, grid.tiles_x - 1, grid.tiles_y - 1);
    let (c, r) = vol.shape.bounding_sphere();
    let (mut x0, mut y0, mut x1, mut y1) = (f32::INFINITY, f32::INFINITY, f32::NEG_INFINITY, f32::NEG_INFINITY);
    for i in 0..8 {
        let corner = c + Vec3::new(
            if i & 1 == 0 { -r } else { r },
            if i & 2 == 0 { -r } else { r },
            if i & 4 == 0 { -r } else { r },
        );
        if (corner - camera.position).dot(frame.forward) <= camera.near {
            // Straddles the near plane: the projection is unbounded.
            if (c - camera.position).dot(frame.forward) + r * 3f32.sqrt() < camera.near {
                return None;
            }
            return Some(full);
        }
        let (px, py) = camera.project(frame, corner)?;
        x0 = x0.min(px);
        y0 = y0.min(py);
        x1 = x1.max(px);
        y1 = y1.max(py);
    }
    // one pixel of slack for rounding in the projection
    let (x0, y0, x1, y1) = (x0 - 1.0, y0 - 1.0, x1 + 1.0, y1 + 1.0);
    if x1 < 0.0 || y1 < 0.0 || x0 >= camera.width as f32 || y0 >= camera.height as f32 {
        return None;
    }
    let ts = TILE_SIZE as f32;
    let clampx = |v: f32| ((v.max(0.0) / ts) as u32).min(grid.tiles_x - 1);
    let clampy = |v: f32| ((v.max(0.0) / ts) as u32).min(grid.tiles_y - 1);
    Some((clampx(x0), clampy(y0), clampx(x1), clampy(y1)))
}

/// Fragment of `vol` on `tile`: min entry and max exit over the tile's hitting rays.
pub fn tile_fragment(
    camera: &Camera,
    rays: &PixelRays,
    grid: &TileGrid,
    tile: usize,
    vol: &VolumeOfInterest,
) -> Option<Fragment> {
    let mut entry = f32::INFINITY;
    let mut exit = f32::NEG_INFINITY;
    for (x, y) in grid.pixels(tile) {
        let (dir, cos) = rays.get(x, y);
        let (t_min, t_max) = (camera.near / cos, camera.far / cos);
        if let Some((a, b)) = ray_volume_intersect(camera.position, dir, vol, t_min, t_max) {
            entry = entry.min(ndc_entry(camera, a, cos));
            exit = exit.max(ndc_exit(camera, b, cos));
        }
    }
    (entry <= exit).then_some(Fragment { primitive: vol.primitive, z_entry: entry, z_exit: exit })
}

pub fn rasterize_volumes(volumes: &[VolumeOfInterest], camera: &Camera, grid: TileGrid) -> TileABuffer {
    let frame = camera.frame();
    let rays = PixelRays::new(camera, &frame);
    rasterize_with_rays(volumes, camera, &frame, &rays, grid)
}

pub fn rasterize_with_rays(
    volumes: &[VolumeOfInterest],
    camera: &Camera,
    frame: &CameraFrame,
    rays: &PixelRays,
    grid: TileGrid,
) -> TileABuffer {
    let per_volume: Vec<Vec<(usize, Fragment)>> = volumes
        .par_iter()
        .map(|vol| {
            let mut out = Vec::new();
            if let Some((tx0, ty0, tx1, ty1)) = tile_rect(camera, frame, &grid, vol) {
                for ty in ty0..=ty1 {
                    for tx in tx0..=tx1 {
                        let tile = (ty * grid.tiles_x + tx) as usize;
                        if let Some(f) = tile_fragment(camera, rays, &grid, tile, vol) {
                            out.push((tile, f));
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut buffer = TileABuffer::empty(grid);
    for (tile, frag) in per_volume.into_iter().flatten() {
        buffer.lists[tile].push(frag);
    }
    buffer.lists.par_iter_mut().for_each(|l| l.sort_by(fragment_order));
    buffer
}
