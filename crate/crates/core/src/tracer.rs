//! Synchronized per-tile sphere tracing over pruned tree views, the full-tree
//! reference tracer, and normal reconstruction.

use rayon::prelude::*;
use thiserror::Error;

use crate::abuffer::{rasterize_with_rays, Fragment, PixelRays, TileABuffer, TileGrid};
use crate::camera::{Camera, CameraError, CameraFrame};
use crate::math::{Point3, Vec3};
use crate::traversal::{PrunedView, TraversalError, ViewLimits, DEFAULT_CACHE_BYTES, DEFAULT_MAX_OVERLAP, STACK_CAPACITY};
use crate::tree::{build_volumes_of_interest, propagate_roi, LinearTree, VolumeOfInterest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalsMode {
    /// Cross product of reconstructed-position differences.
    Depth,
    /// Central differences of the full field.
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    pub lipschitz: f32,
    pub relax: f32,
    pub min_step: f32,
    pub hit_epsilon: f32,
    pub max_overlap: usize,
    /// Fetch window in scene units; `None` uses a twentieth of the depth range.
    pub fetch_window: Option<f32>,
    pub max_new_per_fetch: usize,
    pub cache_bytes: usize,
    pub normals: NormalsMode,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig::with_steps(1.45, 0.005)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("lipschitz bound must be at least 1, got {0}")]
    Lipschitz(f32),
    #[error("overrelaxation must lie in [1, 2), got {0}")]
    Relax(f32),
    #[error("minimum step must be finite and positive, got {0}")]
    MinStep(f32),
    #[error("hit epsilon must be finite and non-negative, got {0}")]
    HitEpsilon(f32),
    #[error("maximal overlap must lie in 1..={max}, got {got}")]
    MaxOverlap { got: usize, max: usize },
    #[error("fetch window must be finite and positive, got {0}")]
    FetchWindow(f32),
    #[error("at least one new primitive per fetch is required")]
    MaxNew,
}

impl RenderConfig {
    /// Defaults with the given Lipschitz bound and minimum step; the hit
    /// epsilon follows as half a minimum step in field units.
    pub fn with_steps(lipschitz: f32, min_step: f32) -> RenderConfig {
        RenderConfig {
            lipschitz,
            relax: 1.7,
            min_step,
            hit_epsilon: 0.5 * min_step * lipschitz,
            max_overlap: DEFAULT_MAX_OVERLAP,
            fetch_window: None,
            max_new_per_fetch: 6,
            cache_bytes: DEFAULT_CACHE_BYTES,
            normals: NormalsMode::Depth,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lipschitz >= 1.0 && self.lipschitz.is_finite()) {
            return Err(ConfigError::Lipschitz(self.lipschitz));
        }
        if !(1.0..2.0).contains(&self.relax) {
            return Err(ConfigError::Relax(self.relax));
        }
        if !(self.min_step > 0.0 && self.min_step.is_finite()) {
            return Err(ConfigError::MinStep(self.min_step));
        }
        if !(self.hit_epsilon >= 0.0 && self.hit_epsilon.is_finite()) {
            return Err(ConfigError::HitEpsilon(self.hit_epsilon));
        }
        let max = 4 * DEFAULT_MAX_OVERLAP;
        if self.max_overlap == 0 || self.max_overlap > max {
            return Err(ConfigError::MaxOverlap { got: self.max_overlap, max });
        }
        if let Some(w) = self.fetch_window {
            if !(w > 0.0 && w.is_finite()) {
                return Err(ConfigError::FetchWindow(w));
            }
        }
        if self.max_new_per_fetch == 0 {
            return Err(ConfigError::MaxNew);
        }
        Ok(())
    }

    pub fn fetch_window_for(&self, camera: &Camera) -> f32 {
        self.fetch_window.unwrap_or((camera.far - camera.near) / 20.0)
    }

    /// Dilation added to every volume so that accepted hits lie inside them.
    pub fn voi_margin(&self) -> f32 {
        2.0 * self.hit_epsilon
    }

    pub fn view_limits(&self) -> ViewLimits {
        ViewLimits { max_active: self.max_overlap, cache_bytes: self.cache_bytes }
    }
}

/// Fetch limits of one tile.
#[derive(Debug, Clone, Copy)]
pub struct FetchRules {
    /// In the units returned by the depth conversion passed to `fetch_interval`.
    pub window: f32,
    pub max_new: usize,
    pub max_overlap: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TileState {
    /// Next unread fragment.
    pub cursor: usize,
    pub active: Vec<Fragment>,
    pub z_begin: f32,
    pub z_end: f32,
    /// Set when the overlap limit stopped a fetch that the other rules allowed.
    pub saturated: bool,
    /// Fragments dropped to force progress while saturated.
    pub dropped: usize,
}

impl TileState {
    /// Ascending node indices of the active primitives.
    pub fn active_indices(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.active.iter().map(|f| f.primitive).collect();
        v.sort_unstable();
        v
    }
}

/// Advances `state` to the next subfrustum; `false` once the list is exhausted.
pub fn fetch_interval(
    state: &mut TileState,
    list: &[Fragment],
    rules: &FetchRules,
    to_depth: impl Fn(f32) -> f32,
) -> bool {
    let z_end = state.z_end;
    state.active.retain(|f| f.z_exit > z_end);
    let Some(first) = list.get(state.cursor) else {
        if state.active.is_empty() {
            return false;
        }
        state.z_begin = z_end;
        state.z_end = max_exit(&state.active);
        return true;
    };
    state.z_begin = z_end.max(first.z_entry);

    let mut fetched = 0usize;
    while let Some(next) = list.get(state.cursor) {
        let overlaps = state.active.is_empty() || next.z_entry <= max_exit(&state.active);
        let in_window = to_depth(next.z_entry) - to_depth(state.z_begin) < rules.window;
        let budget = fetched < rules.max_new;
        if !(overlaps && in_window && budget) {
            break;
        }
        if state.active.len() >= rules.max_overlap {
            state.saturated = true;
            break;
        }
        state.active.push(*next);
        state.cursor += 1;
        fetched += 1;
    }

    state.z_end = match list.get(state.cursor) {
        Some(next) => next.z_entry.min(max_exit(&state.active)),
        None => max_exit(&state.active),
    };
    if state.z_end <= state.z_begin && fetched == 0 {
        // Saturated on a fragment starting exactly here: drop it to move on.
        state.cursor += 1;
        state.dropped += 1;
        state.z_end = match list.get(state.cursor) {
            Some(next) => next.z_entry.min(max_exit(&state.active)),
            None => max_exit(&state.active),
        };
    }
    true
}

fn max_exit(active: &[Fragment]) -> f32 {
    active.iter().map(|f| f.z_exit).fold(f32::NEG_INFINITY, f32::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOutcome {
    pub hit: Option<f32>,
    pub evals: u32,
}

/// Overrelaxed sphere tracing of `[t0, t1]`.
///
/// A relaxed step whose landing sphere does not intersect the sphere it was
/// taken from is rolled back to that sphere's boundary, and the next step is
/// taken unrelaxed. Hits are reported at the secant estimate of the zero
/// crossing, which costs no extra evaluation.
pub fn sphere_trace(
    mut field: impl FnMut(Point3) -> f32,
    origin: Point3,
    dir: Vec3,
    t0: f32,
    t1: f32,
    cfg: &RenderConfig,
) -> TraceOutcome {
    let mut t = t0;
    let mut evals = 0u32;
    // (start, plain radius) of the last relaxed step
    let mut saved: Option<(f32, f32)> = None;
    let mut relax_next = true;
    // last sample a step was taken from
    let mut prev: Option<(f32, f32)> = None;
    while t <= t1 {
        let f = field(origin + dir * t);
        evals += 1;
        let r = f / cfg.lipschitz;
        if let Some((ts, rs)) = saved.take() {
            if t - ts > rs + r {
                t = ts + rs.max(cfg.min_step);
                relax_next = false;
                continue;
            }
        }
        if f <= cfg.hit_epsilon {
            return TraceOutcome { hit: Some(iso_crossing(prev, t, f)), evals };
        }
        prev = Some((t, f));
        let step = if relax_next && cfg.relax > 1.0 {
            saved = Some((t, r));
            r * cfg.relax
        } else {
            relax_next = true;
            r
        };
        t += step.max(cfg.min_step);
    }
    TraceOutcome { hit: None, evals }
}

/// Zero-crossing estimate from the last step origin and the hit sample.
///
/// Inside samples interpolate between the two. Samples still outside are
/// advanced along the secant by at most `f`, which keeps grazing rays that
/// never cross the surface within the hit band.
fn iso_crossing(prev: Option<(f32, f32)>, t: f32, f: f32) -> f32 {
    let Some((tp, fp)) = prev else { return t };
    if !(fp > f && tp < t) {
        return t;
    }
    let s = tp + (t - tp) * fp / (fp - f);
    if !s.is_finite() {
        return t;
    }
    if f <= 0.0 {
        s.clamp(tp, t)
    } else {
        s.clamp(t, t + f)
    }
}

pub fn sphere_trace_interval(
    view: &PrunedView<'_>,
    origin: Point3,
    dir: Vec3,
    t0: f32,
    t1: f32,
    cfg: &RenderConfig,
) -> TraceOutcome {
    sphere_trace(|p| view.eval(p), origin, dir, t0, t1, cfg)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TileDiagnostics {
    pub fragments: u32,
    pub intervals: u32,
    pub max_overlap: u32,
    pub max_cache_bytes: u32,
    pub max_view_nodes: u32,
    pub saturated: bool,
    pub error: Option<String>,
}

/// Instrumentation totals over a render.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RenderCounters {
    pub field_evals: u64,
    /// Retained nodes visited, summed over field evaluations.
    pub node_visits: u64,
    pub primitive_evals: u64,
    /// Node and primitive visits a full-tree walk would have made for the same evaluations.
    pub full_tree_node_visits: u64,
    pub full_tree_primitive_evals: u64,
}

impl RenderCounters {
    fn add(&mut self, o: &RenderCounters) {
        self.field_evals += o.field_evals;
        self.node_visits += o.node_visits;
        self.primitive_evals += o.primitive_evals;
        self.full_tree_node_visits += o.full_tree_node_visits;
        self.full_tree_primitive_evals += o.full_tree_primitive_evals;
    }

    pub fn mean_nodes_per_eval(&self) -> f64 {
        if self.field_evals == 0 {
            0.0
        } else {
            self.node_visits as f64 / self.field_evals as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    pub width: u32,
    pub height: u32,
    pub hit: Vec<bool>,
    /// Distance along the unit pixel ray; infinite on misses.
    pub depth: Vec<f32>,
    pub normal: Vec<Vec3>,
    pub evals: Vec<u32>,
    /// Empty for full-tree renders.
    pub tiles: Vec<TileDiagnostics>,
    pub counters: RenderCounters,
}

impl GBuffer {
    pub fn empty(width: u32, height: u32) -> GBuffer {
        let n = (width * height) as usize;
        GBuffer {
            width,
            height,
            hit: vec![false; n],
            depth: vec![f32::INFINITY; n],
            normal: vec![Vec3::ZERO; n],
            evals: vec![0; n],
            tiles: Vec::new(),
            counters: RenderCounters::default(),
        }
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn hit_count(&self) -> usize {
        self.hit.iter().filter(|&&h| h).count()
    }

    pub fn error_tiles(&self) -> usize {
        self.tiles.iter().filter(|t| t.error.is_some()).count()
    }

    pub fn max_overlap(&self) -> u32 {
        self.tiles.iter().map(|t| t.max_overlap).max().unwrap_or(0)
    }

    pub fn max_cache_bytes(&self) -> u32 {
        self.tiles.iter().map(|t| t.max_cache_bytes).max().unwrap_or(0)
    }
}

struct TileOutput {
    pixels: Vec<(usize, Option<f32>, u32)>,
    diag: TileDiagnostics,
    counters: RenderCounters,
}

/// Relative slack applied when converting interval bounds back from NDC.
const INTERVAL_SLACK: f32 = 1e-5;

#[allow(clippy::too_many_arguments)]
fn render_tile(
    tree: &LinearTree,
    list: &[Fragment],
    camera: &Camera,
    rays: &PixelRays,
    grid: &TileGrid,
    tile: usize,
    cfg: &RenderConfig,
    rules: &FetchRules,
) -> TileOutput {
    let pixels: Vec<(u32, u32)> = grid.pixels(tile).collect();
    let mut found: Vec<Option<f32>> = vec![None; pixels.len()];
    let mut evals = vec![0u32; pixels.len()];
    let mut diag = TileDiagnostics { fragments: list.len() as u32, ..Default::default() };
    let mut counters = RenderCounters::default();
    let (nodes, prims) = (tree.node_count() as u64, tree.primitive_count() as u64);

    let mut state = TileState::default();
    while found.iter().any(Option::is_none)
        && fetch_interval(&mut state, list, rules, |z| camera.ndc_to_view_depth(z))
    {
        diag.intervals += 1;
        diag.max_overlap = diag.max_overlap.max(state.active.len() as u32);
        let active = state.active_indices();
        let view = match PrunedView::build(tree, &active, cfg.view_limits()) {
            Ok(v) => v,
            Err(e) => {
                diag.error = Some(e.to_string());
                break;
            }
        };
        diag.max_cache_bytes = diag.max_cache_bytes.max(view.cache_bytes() as u32);
        diag.max_view_nodes = diag.max_view_nodes.max(view.len() as u32);
        let z0 = camera.ndc_to_view_depth(state.z_begin) * (1.0 - INTERVAL_SLACK);
        let z1 = camera.ndc_to_view_depth(state.z_end) * (1.0 + INTERVAL_SLACK);
        for (k, &(x, y)) in pixels.iter().enumerate() {
            if found[k].is_some() {
                continue;
            }
            let (dir, cos) = rays.get(x, y);
            let out = sphere_trace_interval(&view, camera.position, dir, z0 / cos, z1 / cos, cfg);
            evals[k] += out.evals;
            let e = out.evals as u64;
            counters.field_evals += e;
            counters.node_visits += e * view.len() as u64;
            counters.primitive_evals += e * view.primitive_count() as u64;
            counters.full_tree_node_visits += e * nodes;
            counters.full_tree_primitive_evals += e * prims;
            found[k] = out.hit;
        }
    }
    diag.saturated = state.saturated;
    if state.dropped > 0 && diag.error.is_none() {
        diag.error = Some(format!("{} fragments dropped at the overlap limit", state.dropped));
    }
    let pixels = pixels
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| ((y * grid.width + x) as usize, found[k], evals[k]))
        .collect();
    TileOutput { pixels, diag, counters }
}

/// Per-tile synchronized tracing over `abuffer`.
pub fn render_tiles(tree: &LinearTree, abuffer: &TileABuffer, camera: &Camera, cfg: &RenderConfig) -> GBuffer {
    let frame = camera.frame();
    let rays = PixelRays::new(camera, &frame);
    render_tiles_with_rays(tree, abuffer, camera, &rays, cfg)
}

fn render_tiles_with_rays(
    tree: &LinearTree,
    abuffer: &TileABuffer,
    camera: &Camera,
    rays: &PixelRays,
    cfg: &RenderConfig,
) -> GBuffer {
    let grid = abuffer.grid;
    let rules = FetchRules {
        window: cfg.fetch_window_for(camera),
        max_new: cfg.max_new_per_fetch,
        max_overlap: cfg.max_overlap,
    };
    let outputs: Vec<TileOutput> = (0..grid.tile_count())
        .into_par_iter()
        .map(|tile| render_tile(tree, abuffer.list(tile), camera, rays, &grid, tile, cfg, &rules))
        .collect();

    let mut g = GBuffer::empty(camera.width, camera.height);
    for out in outputs {
        for (i, hit, e) in out.pixels {
            g.evals[i] = e;
            if let Some(t) = hit {
                g.hit[i] = true;
                g.depth[i] = t;
            }
        }
        g.counters.add(&out.counters);
        g.tiles.push(out.diag);
    }
    g
}

/// Reference renderer: every step evaluates the full tree over `[near, far]`.
pub fn oracle_render(tree: &LinearTree, camera: &Camera, cfg: &RenderConfig) -> GBuffer {
    let frame = camera.frame();
    let (nodes, prims) = (tree.node_count() as u64, tree.primitive_count() as u64);
    let rows: Vec<Vec<TraceOutcome>> = (0..camera.height)
        .into_par_iter()
        .map(|y| {
            (0..camera.width)
                .map(|x| {
                    let dir = camera.pixel_ray(&frame, x, y);
                    let cos = dir.dot(frame.forward);
                    if tree.node_count() == 0 {
                        return TraceOutcome { hit: None, evals: 0 };
                    }
                    sphere_trace(|p| tree.eval_full(p), camera.position, dir, camera.near / cos, camera.far / cos, cfg)
                })
                .collect()
        })
        .collect();
    let mut g = GBuffer::empty(camera.width, camera.height);
    for (i, out) in rows.into_iter().flatten().enumerate() {
        g.evals[i] = out.evals;
        if let Some(t) = out.hit {
            g.hit[i] = true;
            g.depth[i] = t;
        }
        let e = out.evals as u64;
        g.counters.field_evals += e;
        g.counters.node_visits += e * nodes;
        g.counters.primitive_evals += e * prims;
        g.counters.full_tree_node_visits += e * nodes;
        g.counters.full_tree_primitive_evals += e * prims;
    }
    g
}

fn gradient_normal(tree: &LinearTree, p: Point3, h: f32) -> Vec3 {
    let d = |v: Vec3| tree.eval_full(p + v) - tree.eval_full(p - v);
    Vec3::new(d(Vec3::X * h), d(Vec3::Y * h), d(Vec3::Z * h)).normalize()
}

/// Fills `g.normal` for hit pixels; misses keep a zero normal.
pub fn compute_normals(g: &mut GBuffer, camera: &Camera, mode: NormalsMode, tree: &LinearTree, cfg: &RenderConfig) {
    let frame = camera.frame();
    let (w, h) = (g.width, g.height);
    let pos = |x: u32, y: u32, t: f32| camera.position + camera.pixel_ray(&frame, x, y) * t;
    let step = cfg.min_step;
    let normals: Vec<Vec3> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let g = &*g;
            (0..w).map(move |x| {
                let i = g.index(x, y);
                if !g.hit[i] {
                    return Vec3::ZERO;
                }
                let t = g.depth[i];
                let p = pos(x, y, t);
                let dir = camera.pixel_ray(&frame, x, y);
                let from_depth = || -> Option<Vec3> {
                    let neighbor = |nx: i64, ny: i64| -> Option<f32> {
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            return None;
                        }
                        let j = g.index(nx as u32, ny as u32);
                        g.hit[j].then_some(g.depth[j])
                    };
                    let pick = |a: (i64, i64), b: (i64, i64)| -> Option<Vec3> {
                        let da = neighbor(a.0, a.1).map(|ta| (ta, (ta - t).abs(), 1.0f32, a));
                        let db = neighbor(b.0, b.1).map(|tb| (tb, (tb - t).abs(), -1.0f32, b));
                        let best = match (da, db) {
                            (Some(a), Some(b)) => Some(if a.1 <= b.1 { a } else { b }),
                            (a, b) => a.or(b),
                        }?;
                        let (tn, _, sign, (nx, ny)) = best;
                        Some((pos(nx as u32, ny as u32, tn) - p) * sign)
                    };
                    let (xi, yi) = (x as i64, y as i64);
                    let dx = pick((xi + 1, yi), (xi - 1, yi))?;
                    let dy = pick((xi, yi + 1), (xi, yi - 1))?;
                    let n = dx.cross(dy);
                    (n.length() > 0.0).then(|| n.normalize())
                };
                let n = match mode {
                    NormalsMode::Depth => from_depth().unwrap_or_else(|| gradient_normal(tree, p, step)),
                    NormalsMode::Gradient => gradient_normal(tree, p, step),
                };
                if n.dot(dir) > 0.0 {
                    -n
                } else {
                    n
                }
            })
        })
        .collect();
    g.normal = normals;
}

#[derive(Debug, Error)]
pub enum RenderError {
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scene uses bounded smooth operators: volumes of interest are unsound, use the full-tree renderer")]
    NonCompact,
    #[error(transparent)]
    Traversal(#[from] TraversalError),
}

/// Everything a pipeline render produces.
#[derive(Debug, Clone)]
pub struct PipelineRender {
    pub gbuffer: GBuffer,
    pub abuffer: TileABuffer,
    pub volumes: Vec<VolumeOfInterest>,
}

/// Ranges, volumes, A-buffer, tiled tracing and normals for a tree with fast links.
pub fn render_pipeline(tree: &LinearTree, camera: &Camera, cfg: &RenderConfig) -> Result<PipelineRender, RenderError> {
    camera.validate()?;
    cfg.validate()?;
    let rois = propagate_roi(tree);
    if !rois.compact {
        return Err(RenderError::NonCompact);
    }
    if tree.full_walk_stack_depth() > STACK_CAPACITY {
        return Err(RenderError::Traversal(TraversalError::StackOverflow(STACK_CAPACITY)));
    }
    let volumes = build_volumes_of_interest(tree, &rois, cfg.voi_margin());
    let frame: CameraFrame = camera.frame();
    let rays = PixelRays::new(camera, &frame);
    let grid = TileGrid::for_camera(camera);
    let abuffer = rasterize_with_rays(&volumes, camera, &frame, &rays, grid);
    let mut gbuffer = render_tiles_with_rays(tree, &abuffer, camera, &rays, cfg);
    compute_normals(&mut gbuffer, camera, cfg.normals, tree, cfg);
    Ok(PipelineRender { gbuffer, abuffer, volumes })
}
