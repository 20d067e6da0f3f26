//! `blobtree`: render a scene file or a generated grid with the tiled
//! pipeline or the full-tree reference renderer.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use blobtree::abuffer::{TileGrid, TILE_SIZE};
use blobtree::camera::Camera;
use blobtree::document::parse_scene;
use blobtree::image::{compare_depths, read_pfm, write_pfm, write_pgm16, write_ppm};
use blobtree::math::Vec3;
use blobtree::synth::{generate_synthetic, grid_bounds, SynthSpec};
use blobtree::tracer::{
    compute_normals, oracle_render, render_pipeline, GBuffer, NormalsMode, RenderConfig, RenderCounters,
};
use blobtree::tree::{compile, compute_fast_indices, LinearTree, SceneNode, VolumeShape};
use clap::{ArgGroup, Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Normals {
    Depth,
    Grad,
}

#[derive(Debug, Parser)]
#[command(name = "blobtree", version, about = "Tile-based sphere tracing of blobtree scenes", allow_negative_numbers = true)]
#[command(group(ArgGroup::new("input").required(true).args(["scene", "generate"])))]
struct Args {
    /// JSON scene file
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Generated grid, `preset:grid:kind:blend` (e.g. r0:4x4x2:cluster6:smooth)
    #[arg(long)]
    generate: Option<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    width: u32,
    #[arg(long, default_value_t = 512)]
    height: u32,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Directory for diagnostic planes (defaults to --out)
    #[arg(long)]
    stats_dir: Option<PathBuf>,
    /// Trace every pixel against the full tree instead of the tiled pipeline
    #[arg(long)]
    oracle: bool,
    /// Reference depth map (`depth.pfm` of an earlier run) to compare against
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    lipschitz: Option<f32>,
    #[arg(long)]
    relax: Option<f32>,
    #[arg(long)]
    min_step: Option<f32>,
    #[arg(long)]
    max_overlap: Option<usize>,
    /// Depth window for primitive fetches, in scene units
    #[arg(long)]
    fetch_window: Option<f32>,
    #[arg(long, value_enum, default_value = "depth")]
    normals: Normals,
    /// Print instrumentation counts
    #[arg(long)]
    bench: bool,
    /// Only 8 is supported
    #[arg(long, default_value_t = TILE_SIZE)]
    tile_size: u32,
}

/// Exit status when the render completed but some tiles failed.
const EXIT_DIAGNOSTIC: u8 = 3;
const ERROR_COLOR: [u8; 3] = [255, 0, 255];

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&args) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("BLOBTREE_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).with_context(|| {
        format!("BLOBTREE_THREADS must be a positive integer, got {v:?}")
    })?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    Ok(())
}

fn render_config(args: &Args) -> Result<RenderConfig> {
    let base = RenderConfig::default();
    let mut cfg = RenderConfig::with_steps(
        args.lipschitz.unwrap_or(base.lipschitz),
        args.min_step.unwrap_or(base.min_step),
    );
    if let Some(r) = args.relax {
        cfg.relax = r;
    }
    if let Some(m) = args.max_overlap {
        cfg.max_overlap = m;
    }
    cfg.fetch_window = args.fetch_window;
    cfg.normals = match args.normals {
        Normals::Depth => NormalsMode::Depth,
        Normals::Grad => NormalsMode::Gradient,
    };
    cfg.validate().context("invalid render settings")?;
    Ok(cfg)
}

/// Sphere around every primitive's own bounding volume.
fn scene_bounds(tree: &LinearTree) -> (Vec3, f32) {
    let spheres: Vec<(Vec3, f32)> = tree
        .primitive_indices()
        .iter()
        .map(|&i| VolumeShape::enclosing(tree.primitive(i).expect("primitive"), 0.0).bounding_sphere())
        .collect();
    let (lo, hi) = spheres.iter().fold(
        (Vec3::splat(f32::INFINITY), Vec3::splat(f32::NEG_INFINITY)),
        |(lo, hi), &(c, r)| (lo.min(c - Vec3::splat(r)), hi.max(c + Vec3::splat(r))),
    );
    let center = (lo + hi) * 0.5;
    let radius = spheres.iter().map(|&(c, r)| (c - center).length() + r).fold(0.0, f32::max);
    (center, radius.max(1e-3))
}

const VIEW_FROM: Vec3 = Vec3 { x: 0.3, y: 0.6, z: 1.0 };

fn load(args: &Args) -> Result<(SceneNode, Option<Camera>, Option<(Vec3, f32)>)> {
    if let Some(path) = &args.scene {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let doc = parse_scene(&text).with_context(|| format!("parsing {}", path.display()))?;
        let camera = doc.camera.map(|c| c.with_size(args.width, args.height));
        Ok((doc.root, camera, None))
    } else {
        let text = args.generate.as_deref().expect("clap requires an input");
        let spec: SynthSpec = text.parse().context("--generate")?;
        Ok((generate_synthetic(&spec, args.seed), None, Some(grid_bounds(&spec))))
    }
}

fn run(args: &Args) -> Result<u8> {
    if args.tile_size != TILE_SIZE {
        bail!("--tile-size {} is not supported; tiles are {TILE_SIZE}x{TILE_SIZE}", args.tile_size);
    }
    if args.width == 0 || args.height == 0 {
        bail!("image size must be positive, got {}x{}", args.width, args.height);
    }
    configure_threads()?;
    let cfg = render_config(args)?;
    let (scene, camera, bounds) = load(args)?;
    let tree = compute_fast_indices(&compile(&scene).context("compiling the scene")?);
    let camera = match camera {
        Some(c) => c,
        None => {
            let (center, radius) = bounds.unwrap_or_else(|| scene_bounds(&tree));
            Camera::framing(center, radius, VIEW_FROM, args.width, args.height)
        }
    };
    camera.validate().context("invalid camera")?;

    let start = Instant::now();
    let (gbuffer, fragments) = if args.oracle {
        let mut g = oracle_render(&tree, &camera, &cfg);
        compute_normals(&mut g, &camera, cfg.normals, &tree, &cfg);
        (g, None)
    } else {
        let r = render_pipeline(&tree, &camera, &cfg)
            .context("tiled renderer (use --oracle for scenes with bounded smooth operators)")?;
        let counts = r.abuffer.counts();
        (r.gbuffer, Some(counts))
    };
    let elapsed = start.elapsed();

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let stats_dir = args.stats_dir.as_ref().unwrap_or(&args.out);
    fs::create_dir_all(stats_dir).with_context(|| format!("creating {}", stats_dir.display()))?;

    write_images(&args.out, &gbuffer, &camera)?;
    write_diagnostics(stats_dir, &gbuffer, fragments.as_deref())?;

    let mut summary = stats_summary(args, &tree, &gbuffer);
    if let Some(reference) = &args.compare {
        let file = File::open(reference).with_context(|| format!("opening {}", reference.display()))?;
        let (w, h, depth) = read_pfm(BufReader::new(file)).with_context(|| format!("reading {}", reference.display()))?;
        if (w, h) != (gbuffer.width, gbuffer.height) {
            bail!("{} is {w}x{h}, the render is {}x{}", reference.display(), gbuffer.width, gbuffer.height);
        }
        let report = compare_depths(w, h, &gbuffer.depth, &depth, 2.0 * cfg.min_step);
        println!("{report}");
        fs::write(args.out.join("compare.txt"), format!("{report}\n"))?;
        summary.push_str(&format!("{report}\n"));
    }
    fs::write(stats_dir.join("stats.txt"), &summary)?;
    if args.bench {
        print!("{}", bench_report(&gbuffer.counters));
    }
    eprintln!(
        "rendered {}x{} in {:.2}s, {} hits, {} field evaluations",
        gbuffer.width,
        gbuffer.height,
        elapsed.as_secs_f64(),
        gbuffer.hit_count(),
        gbuffer.counters.field_evals
    );

    let failed = gbuffer.error_tiles();
    if failed > 0 {
        for (i, t) in gbuffer.tiles.iter().enumerate().filter(|(_, t)| t.error.is_some()) {
            eprintln!("tile {i}: {}", t.error.as_deref().unwrap_or_default());
        }
        eprintln!("error: {failed} tiles failed and are drawn in magenta");
        return Ok(EXIT_DIAGNOSTIC);
    }
    Ok(0)
}

fn bench_report(c: &RenderCounters) -> String {
    format!(
        "field_evals {}\nretained_node_visits {}\nfull_tree_node_visits {}\nprimitive_evals {}\n\
         full_tree_primitive_evals {}\nmean_retained_nodes_per_eval {:.4}\nmean_full_tree_nodes_per_eval {:.4}\n",
        c.field_evals,
        c.node_visits,
        c.full_tree_node_visits,
        c.primitive_evals,
        c.full_tree_primitive_evals,
        c.mean_nodes_per_eval(),
        c.full_tree_node_visits as f64 / c.field_evals.max(1) as f64,
    )
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().with_context(|| format!("writing {}", path.display()))
}

/// Depth planes are visualised as `65535 - 65534 * (t - near) / (far - near)`, 0 for misses.
fn depth_to_gray(t: f32, camera: &Camera) -> u16 {
    if !t.is_finite() {
        return 0;
    }
    let s = ((t - camera.near) / (camera.far - camera.near)).clamp(0.0, 1.0);
    65535 - (s * 65534.0).round() as u16
}

fn error_pixels(g: &GBuffer) -> Vec<bool> {
    let grid = TileGrid::new(g.width, g.height);
    let mut mask = vec![false; (g.width * g.height) as usize];
    for (tile, diag) in g.tiles.iter().enumerate() {
        if diag.error.is_some() {
            for (x, y) in grid.pixels(tile) {
                mask[g.index(x, y)] = true;
            }
        }
    }
    mask
}

fn write_images(dir: &Path, g: &GBuffer, camera: &Camera) -> Result<()> {
    let errors = error_pixels(g);
    let normal: Vec<[u8; 3]> = g
        .normal
        .iter()
        .zip(&g.hit)
        .zip(&errors)
        .map(|((n, &hit), &bad)| {
            if bad {
                ERROR_COLOR
            } else if hit {
                let c = |v: f32| ((v * 0.5 + 0.5).clamp(0.0, 1.0) * 255.0).round() as u8;
                [c(n.x), c(n.y), c(n.z)]
            } else {
                [0, 0, 0]
            }
        })
        .collect();
    let path = dir.join("normal.ppm");
    let mut w = create(&path)?;
    write_ppm(&mut w, g.width, g.height, &normal)?;
    finish(w, &path)?;

    let path = dir.join("depth.pfm");
    let mut w = create(&path)?;
    write_pfm(&mut w, g.width, g.height, &g.depth)?;
    finish(w, &path)?;

    let gray: Vec<u16> = g.depth.iter().map(|&t| depth_to_gray(t, camera)).collect();
    let path = dir.join("depth.pgm");
    let mut w = create(&path)?;
    write_pgm16(&mut w, g.width, g.height, &gray)?;
    finish(w, &path)
}

fn write_plane(dir: &Path, name: &str, g: &GBuffer, values: &[u16]) -> Result<()> {
    let path = dir.join(name);
    let mut w = create(&path)?;
    write_pgm16(&mut w, g.width, g.height, values)?;
    finish(w, &path)
}

/// Per-tile values broadcast to their pixels.
fn tile_plane(g: &GBuffer, value: impl Fn(usize) -> u32) -> Vec<u16> {
    let grid = TileGrid::new(g.width, g.height);
    let mut plane = vec![0u16; (g.width * g.height) as usize];
    for tile in 0..grid.tile_count() {
        let v = value(tile).min(u16::MAX as u32) as u16;
        for (x, y) in grid.pixels(tile) {
            plane[g.index(x, y)] = v;
        }
    }
    plane
}

fn write_diagnostics(dir: &Path, g: &GBuffer, fragments: Option<&[u32]>) -> Result<()> {
    let evals: Vec<u16> = g.evals.iter().map(|&e| e.min(u16::MAX as u32) as u16).collect();
    write_plane(dir, "evals.pgm", g, &evals)?;
    if let Some(counts) = fragments {
        write_plane(dir, "overlap.pgm", g, &tile_plane(g, |t| g.tiles[t].max_overlap))?;
        write_plane(dir, "cache.pgm", g, &tile_plane(g, |t| g.tiles[t].max_cache_bytes))?;
        write_plane(dir, "fragments.pgm", g, &tile_plane(g, |t| counts[t]))?;
    }
    Ok(())
}

fn stats_summary(args: &Args, tree: &LinearTree, g: &GBuffer) -> String {
    let mut s = String::new();
    let source = match (&args.scene, &args.generate) {
        (Some(p), _) => format!("scene {}", p.display()),
        (_, Some(spec)) => format!("generate {spec} seed {}", args.seed),
        _ => unreachable!(),
    };
    s.push_str(&format!("{source}\nrenderer {}\n", if args.oracle { "oracle" } else { "pipeline" }));
    s.push_str(&format!(
        "size {}x{}\nprimitives {}\nnodes {}\nhits {}\nerror_tiles {}\n",
        g.width,
        g.height,
        tree.primitive_count(),
        tree.node_count(),
        g.hit_count(),
        g.error_tiles()
    ));
    if !args.oracle {
        let saturated = g.tiles.iter().filter(|t| t.saturated).count();
        s.push_str(&format!(
            "max_tile_overlap {}\nmax_tile_cache_bytes {}\nsaturated_tiles {saturated}\n",
            g.max_overlap(),
            g.max_cache_bytes()
        ));
    }
    s.push_str(&bench_report(&g.counters));
    s.push_str(
        "# planes (16-bit binary graymaps, raw values, scale 1 unless noted)\n\
         # depth.pgm: 65535 - 65534*(t - near)/(far - near), 0 = miss; depth.pfm holds raw t, inf = miss\n\
         # evals.pgm: field evaluations per pixel\n\
         # overlap.pgm: per-tile maximum active primitives\n\
         # cache.pgm: per-tile maximum parameter cache bytes\n\
         # fragments.pgm: per-tile fragment count\n",
    );
    s
}
