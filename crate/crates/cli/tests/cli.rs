use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn blobtree(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blobtree"))
        .args(args)
        .current_dir(dir)
        .env_remove("BLOBTREE_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SPHERE: &str = r#"{
  "camera": {"position": [0, 0, -4], "target": [0, 0, 0], "near": 1, "far": 8},
  "root": {"op": "compact_union", "k": 0.3,
    "left": {"prim": "sphere", "radius": 0.8, "transform": {"translate": [-0.4, 0, 0]}},
    "right": {"prim": "box", "half_extents": [0.5, 0.5, 0.5], "transform": {"translate": [0.5, 0, 0], "rotate_quat": [0.9, 0.3, 0.2, 0]}}}
}"#;

#[test]
fn generated_grid_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let o = blobtree(
        &["--generate", "r0:2:cluster3:smooth", "--seed", "5", "--width", "256", "--height", "256", "--out", "o", "--stats-dir", "s"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["o/depth.pgm", "o/depth.pfm", "o/normal.ppm", "s/evals.pgm", "s/overlap.pgm", "s/stats.txt"] {
        assert!(tmp.path().join(f).exists(), "missing {f}");
    }
    let normal = fs::read(tmp.path().join("o/normal.ppm")).unwrap();
    assert!(normal.starts_with(b"P6\n256 256\n255\n"));
    assert_eq!(normal.len(), "P6\n256 256\n255\n".len() + 256 * 256 * 3);
    let evals = fs::read(tmp.path().join("s/evals.pgm")).unwrap();
    assert!(evals.starts_with(b"P5\n256 256\n65535\n"));
    let stats = fs::read_to_string(tmp.path().join("s/stats.txt")).unwrap();
    assert!(stats.contains("primitives 24\n"), "{stats}");
    assert!(stats.contains("error_tiles 0\n"));
}

#[test]
fn identical_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = blobtree(&["--generate", "r3:2:mixed:smooth", "--seed", "9", "--width", "96", "--height", "80", "--out", out], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["depth.pfm", "depth.pgm", "normal.ppm", "evals.pgm", "overlap.pgm", "cache.pgm", "fragments.pgm", "stats.txt"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn tile_size_other_than_eight_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = blobtree(&["--generate", "r0:1:cluster3:sharp", "--tile-size", "16"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--tile-size 16"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn bench_reports_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = blobtree(&["--generate", "r0:2:cluster6:smooth", "--width", "64", "--height", "64", "--bench"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let value = |key: &str| -> u64 {
        let line = text.lines().find(|l| l.starts_with(&format!("{key} "))).unwrap_or_else(|| panic!("{key} in {text}"));
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    let evals = value("field_evals");
    assert!(evals > 0);
    // 48 primitives, 95 nodes
    assert_eq!(value("full_tree_node_visits"), evals * 95);
    assert!(value("retained_node_visits") < value("full_tree_node_visits"));
}

#[test]
fn scene_file_with_oracle_comparison() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("scene.json"), SPHERE).unwrap();
    let common = ["--scene", "scene.json", "--width", "64", "--height", "48"];
    let o = blobtree(&[&common[..], &["--out", "ref", "--oracle"]].concat(), tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = blobtree(&[&common[..], &["--out", "run", "--compare", "ref/depth.pfm"]].concat(), tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let agreement: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("hit_agreement "))
        .expect("report")
        .parse()
        .unwrap();
    assert!(agreement > 0.99, "{text}");
    assert!(tmp.path().join("run/compare.txt").exists());

    // reference of another size
    let o = blobtree(&["--scene", "scene.json", "--width", "32", "--height", "32", "--compare", "ref/depth.pfm"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("64x48"), "{}", stderr(&o));
}

#[test]
fn malformed_scenes_report_context() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"root": {"op": "csg_union", "left": {"prim": "sphere", "radius": 1}}}"#, "two children"),
        (r#"{"root": {"prim": "cube", "radius": 1}}"#, "root.prim"),
        (r#"{"root": {"prim": "sphere", "radius": 1, "transform": {"rotate_quat": [0, 0, 0, 0]}}}"#, "root.transform"),
        (r#"{"root": {"op": "compact_union", "k": 0.6, "d": 0.05, "left": {"prim": "sphere", "radius": 1}, "right": {"prim": "sphere", "radius": 1}}}"#, "k/6"),
        ("{\"root\": {\"prim\": \"sphere\",\n \"radius\": }}", "line 2"),
        ("", "line 1"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let name = format!("bad{i}.json");
        fs::write(tmp.path().join(&name), text).unwrap();
        let o = blobtree(&["--scene", &name], tmp.path());
        assert_eq!(o.status.code(), Some(1), "{name}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
    }
    let deep = format!("{}{}", "[".repeat(5000), "]".repeat(5000));
    fs::write(tmp.path().join("deep.json"), format!("{{\"root\": {deep}}}")).unwrap();
    let o = blobtree(&["--scene", "deep.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = blobtree(&["--scene", "missing.json"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.json"));
}

#[test]
fn bounded_smooth_scenes_need_the_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = SPHERE.replace("compact_union", "smooth_union");
    fs::write(tmp.path().join("s.json"), scene).unwrap();
    let o = blobtree(&["--scene", "s.json", "--width", "32", "--height", "32"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--oracle"), "{}", stderr(&o));
    let o = blobtree(&["--scene", "s.json", "--width", "32", "--height", "32", "--oracle"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn invalid_settings_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    for bad in [&["--relax", "2.5"][..], &["--lipschitz", "0.5"], &["--max-overlap", "0"], &["--fetch-window", "-1"], &["--width", "0"]] {
        let o = blobtree(&[&["--generate", "r0:1:cluster3:sharp"][..], bad].concat(), tmp.path());
        assert_eq!(o.status.code(), Some(1), "{bad:?}: {}", stderr(&o));
    }
    let o = blobtree(&["--generate", "r0:1:cluster9:sharp"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cluster9"));
    let o = blobtree(&["--scene", "a.json", "--generate", "r0:1:cluster3:sharp"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn worker_count_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_blobtree"))
            .args(["--generate", "r0:1:cluster3:smooth", "--width", "32", "--height", "32"])
            .current_dir(tmp.path())
            .env("BLOBTREE_THREADS", threads)
            .output()
            .unwrap()
    };
    assert!(run("2").status.success());
    let o = run("many");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("BLOBTREE_THREADS"));
}

#[test]
fn overlap_limit_failures_are_drawn_and_reported() {
    let tmp = tempfile::tempdir().unwrap();
    // a 4x4x4 grid seen edge-on stacks far more than two primitives per tile
    let o = blobtree(
        &["--generate", "r0:4:cluster6:smooth", "--width", "64", "--height", "64", "--max-overlap", "2"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("magenta"));
    let img = fs::read(tmp.path().join("out/normal.ppm")).unwrap();
    let body = &img["P6\n64 64\n255\n".len()..];
    assert!(body.chunks(3).any(|p| p == [255, 0, 255]));
}
