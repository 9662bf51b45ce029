//! Woodcock delta tracking against per-cell majorants, single scattering
//! with one shadow ray toward a directional light.

use super::camera::{generate_rays, Camera};
use super::{Image, Scene};
use crate::error::Result;
use crate::macrocell::{CellSpan, CellWalker, MacroCellGrid};
use crate::math::{splitmix64, Ray, Vec3};
use crate::sampler::{VolumeSampler, Xorshift32};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathTraceOptions {
    /// Extinction per voxel length at opacity 1.
    pub density_scale: f32,
    /// Direction toward the light.
    pub light_dir: Vec3,
    pub light_intensity: f32,
    pub ambient: f32,
}

impl Default for PathTraceOptions {
    fn default() -> Self {
        Self {
            density_scale: 0.5,
            light_dir: Vec3::new(0.4, 0.8, -0.45),
            light_intensity: 1.0,
            ambient: 0.15,
        }
    }
}

struct Tracker {
    id: usize,
    ray: Ray,
    eye: Vec3,
    walker: CellWalker,
    span: Option<(CellSpan, f32)>,
    t: f32,
    rng: Xorshift32,
}

impl Tracker {
    fn new(id: usize, grid: &MacroCellGrid, ray: Ray, eye: Vec3, seed: u64) -> Option<Self> {
        let walker = grid.walker(&ray)?;
        Some(Self {
            id,
            ray,
            eye,
            walker,
            span: None,
            t: 0.0,
            rng: Xorshift32::new(seed),
        })
    }

    /// Next tentative collision `(t, sigma_max)`, or `None` once the ray
    /// leaves the volume.
    fn propose(&mut self, grid: &MacroCellGrid, density_scale: f32) -> Option<(f32, f32)> {
        loop {
            let (span, sigma_max) = match self.span {
                Some(s) => s,
                None => {
                    let s = self.walker.next()?;
                    let sigma_max = density_scale * grid.majorant(s.index);
                    self.t = self.t.max(s.t_enter);
                    self.span = Some((s, sigma_max));
                    (s, sigma_max)
                }
            };
            if sigma_max > 0.0 {
                let xi = self.rng.next_f32();
                let t = self.t - (1.0 - xi).ln() / sigma_max;
                if t < span.t_exit {
                    self.t = t;
                    return Some((t, sigma_max));
                }
            }
            // memoryless: restart the flight at the boundary
            self.t = span.t_exit;
            self.span = None;
        }
    }
}

/// Runs delta tracking for every tracker, returning per id the accepted
/// collision `(t, value)` or `None` for rays that escape.
fn track(
    grid: &MacroCellGrid,
    scene: &Scene,
    sampler: &dyn VolumeSampler,
    mut live: Vec<Tracker>,
    n: usize,
    density_scale: f32,
) -> Result<Vec<Option<(f32, f32)>>> {
    let mut out = vec![None; n];
    let mut proposals = Vec::new();
    while !live.is_empty() {
        live.par_iter_mut()
            .map(|tr| tr.propose(grid, density_scale))
            .collect_into_vec(&mut proposals);
        let mut keep = Vec::with_capacity(live.len());
        let mut cand = Vec::with_capacity(live.len());
        for (tr, p) in live.into_iter().zip(&proposals) {
            if let Some(p) = p {
                keep.push(tr);
                cand.push(*p);
            }
        }
        live = keep;
        if live.is_empty() {
            break;
        }
        let positions: Vec<Vec3> = live
            .iter()
            .zip(&cand)
            .map(|(tr, c)| tr.ray.at(c.0))
            .collect();
        let distances: Vec<f32> = live
            .iter()
            .zip(&positions)
            .map(|(tr, p)| (*p - tr.eye).length())
            .collect();
        let values = sampler.sample(&positions, &distances)?;
        let accepted: Vec<bool> = live
            .par_iter_mut()
            .zip(&cand)
            .zip(&values)
            .map(|((tr, &(_, sigma_max)), &v)| {
                let sigma = density_scale * scene.tf.opacity(v);
                tr.rng.next_f32() * sigma_max < sigma
            })
            .collect();
        let mut keep = Vec::with_capacity(live.len());
        for (((tr, c), v), acc) in live.into_iter().zip(&cand).zip(&values).zip(accepted) {
            if acc {
                out[tr.id] = Some((c.0, *v));
            } else {
                keep.push(tr);
            }
        }
        live = keep;
    }
    Ok(out)
}

/// Delta-tracks `rays` through the scene and returns each ray's collision
/// distance, or `None` when it escapes the volume.
pub fn delta_track(
    scene: &Scene,
    sampler: &dyn VolumeSampler,
    rays: &[Ray],
    density_scale: f32,
    seed: u64,
) -> Result<Vec<Option<f32>>> {
    let trackers = rays
        .iter()
        .enumerate()
        .filter_map(|(i, r)| Tracker::new(i, scene.grid, *r, r.origin, splitmix64(seed ^ i as u64)))
        .collect();
    let hits = track(
        scene.grid,
        scene,
        sampler,
        trackers,
        rays.len(),
        density_scale,
    )?;
    Ok(hits.into_iter().map(|h| h.map(|(t, _)| t)).collect())
}

/// Renders `spp` paths per pixel and returns their average.
pub fn pathtrace_frame(
    camera: &Camera,
    scene: &Scene,
    options: &PathTraceOptions,
    sampler: &dyn VolumeSampler,
    spp: u32,
    seed: u64,
) -> Result<Image> {
    let grid = scene.grid;
    let bg = scene.options.background;
    let npix = (camera.width * camera.height) as usize;
    let mut sum = vec![[0.0f32; 4]; npix];
    let light = options.light_dir.normalized();
    let rays = generate_rays(camera, &grid.bounds());
    let seed_of = |s: u32, pixel: u32, stage: u64| {
        splitmix64(seed ^ ((s as u64) << 32) ^ pixel as u64 ^ (stage << 60))
    };

    for s in 0..spp {
        let primary = rays
            .iter()
            .filter_map(|r| {
                Tracker::new(
                    r.pixel as usize,
                    grid,
                    r.ray,
                    camera.position,
                    seed_of(s, r.pixel, 1),
                )
            })
            .collect();
        let hits = track(grid, scene, sampler, primary, npix, options.density_scale)?;

        let mut albedo = vec![[0.0f32; 3]; npix];
        let mut shadow = Vec::new();
        for (pixel, hit) in hits.iter().enumerate() {
            if let Some((t, v)) = *hit {
                let [r, g, b, _] = scene.tf.eval(v);
                albedo[pixel] = [r, g, b];
                let p = camera
                    .pixel_ray(pixel as u32 % camera.width, pixel as u32 / camera.width)
                    .at(t);
                if let Some(tr) = Tracker::new(
                    pixel,
                    grid,
                    Ray::new(p, light),
                    camera.position,
                    seed_of(s, pixel as u32, 2),
                ) {
                    shadow.push(tr);
                }
            }
        }
        let blocked = track(grid, scene, sampler, shadow, npix, options.density_scale)?;

        for (pixel, acc) in sum.iter_mut().enumerate() {
            let c = if hits[pixel].is_some() {
                let vis = if blocked[pixel].is_some() { 0.0 } else { 1.0 };
                let l = options.light_intensity * vis + options.ambient;
                let a = albedo[pixel];
                [a[0] * l, a[1] * l, a[2] * l, 1.0]
            } else {
                [bg[0], bg[1], bg[2], 0.0]
            };
            for k in 0..4 {
                acc[k] += c[k];
            }
        }
    }
    let inv = 1.0 / spp.max(1) as f32;
    let mut img = Image::new(camera.width, camera.height);
    for (dst, src) in img.pixels.iter_mut().zip(&sum) {
        *dst = src.map(|c| c * inv);
    }
    Ok(img)
}

/// Progressive average over path-traced frames.
#[derive(Clone, Debug, Default)]
pub struct Accumulator {
    width: u32,
    height: u32,
    sum: Vec<[f64; 4]>,
    count: u32,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a frame; a size change restarts the average.
    pub fn add(&mut self, frame: &Image) {
        if frame.width != self.width || frame.height != self.height {
            self.width = frame.width;
            self.height = frame.height;
            self.reset();
        }
        for (s, p) in self.sum.iter_mut().zip(&frame.pixels) {
            for k in 0..4 {
                s[k] += p[k] as f64;
            }
        }
        self.count += 1;
    }

    pub fn reset(&mut self) {
        self.sum = vec![[0.0; 4]; (self.width * self.height) as usize];
        self.count = 0;
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn image(&self) -> Image {
        let mut img = Image::new(self.width, self.height);
        let inv = 1.0 / self.count.max(1) as f64;
        for (dst, s) in img.pixels.iter_mut().zip(&self.sum) {
            *dst = s.map(|c| (c * inv) as f32);
        }
        img
    }
}
