//! Fixtures for the acceptance suite: the scene corpus, seeded certified
//! frames, seeded NC collections and a one-line verdict printer.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use flatbeck::exactlin::{dyadic, Scalar};
use flatbeck::flatcollect::{is_minimal, is_nc};
use flatbeck::flats::AffineFlat;
use flatbeck::measures::DiscreteMeasure;
use flatbeck::rng::{self, SeededRng};
use flatbeck::scene::{parse_scene, Scene};
use flatbeck::stability::{achieved_floor, certify_stability, StabilityConfig, StableFrame};
use flatbeck::thin::ThinGraph;

pub fn scenes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

/// Every scene under `scenes/`, by file name.
pub fn corpus() -> Vec<(String, Scene)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenes_dir())
        .expect("scenes directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let scene = parse_scene(&p).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, scene)
        })
        .collect()
}

pub fn scene(name: &str) -> Scene {
    parse_scene(&scenes_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// The graphs of a scene that carry their own `(σ, K, c)`.
pub fn scene_graphs(scene: &Scene) -> Vec<(String, ThinGraph)> {
    scene
        .graphs
        .iter()
        .filter_map(|(name, spec)| {
            let (sigma, big_k) = (spec.sigma?, spec.big_k?);
            let measures: Vec<DiscreteMeasure> = spec.measures.iter().map(|m| scene.measures[m].clone()).collect();
            let c = spec.c.unwrap_or(0.0);
            let g = match &spec.tuples {
                Some(t) => ThinGraph::new(measures, t.clone(), sigma, big_k, c),
                None => ThinGraph::full(measures, sigma, big_k, c),
            }
            .unwrap_or_else(|e| panic!("graph {name}: {e}"));
            Some((name.clone(), g))
        })
        .collect()
}

/// Flats of the given dims in `Q^n` with small integer data, redrawn until
/// `accept` holds.
pub fn flats_where(g: &mut SeededRng, n: usize, dims: &[usize], accept: impl Fn(&[AffineFlat]) -> bool) -> Vec<AffineFlat> {
    loop {
        let fs: Vec<AffineFlat> = dims.iter().map(|&d| rng::flat(g, n, d, 6, 1)).collect();
        if fs.iter().zip(dims).all(|(f, &d)| f.dim() == d) && accept(&fs) {
            return fs;
        }
    }
}

pub fn nc_collection(g: &mut SeededRng, n: usize, dims: &[usize]) -> Vec<AffineFlat> {
    flats_where(g, n, dims, |fs| is_nc(fs, n).unwrap())
}

/// Seeded minimal frame (`Σ dim F_j = n`) with `dim F_j` slots per flat, each
/// a uniform measure on `atoms` random points of the flat, certified at its
/// achieved floor. Returns the frame and that floor.
pub fn certified_minimal_frame(seed: u64, n: usize, dims: &[usize], atoms: usize) -> (StableFrame, Scalar) {
    assert_eq!(dims.iter().sum::<usize>(), n, "minimal frames have Σ dim F_j = n");
    let mut g = rng::seeded(seed);
    let cfg = StabilityConfig::default();
    loop {
        let flats = flats_where(&mut g, n, dims, |fs| is_minimal(fs).unwrap());
        let mut measures = Vec::new();
        for f in &flats {
            let mut slots = Vec::new();
            for _ in 0..f.dim() {
                let mut pts: Vec<Vec<Scalar>> = Vec::new();
                while pts.len() < atoms {
                    let p = rng::point_on(&mut g, f, 8, 3);
                    if !pts.contains(&p) {
                        pts.push(p);
                    }
                }
                slots.push(DiscreteMeasure::uniform(pts, dyadic(10)).unwrap());
            }
            measures.push(slots);
        }
        let frame = StableFrame::new(flats, measures).unwrap();
        let Some(c2) = achieved_floor(&frame, &cfg).unwrap() else { continue };
        if certify_stability(&frame, &c2, &cfg).unwrap().certified {
            return (frame, c2);
        }
    }
}

/// Prints the verdict line for one criterion and returns `passed`.
pub fn verdict(id: u32, name: &str, passed: bool, detail: impl Display) -> bool {
    println!("criterion {id:>2} [{}] {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    passed
}
