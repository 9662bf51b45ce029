use super::camera::{generate_rays, Camera};
use super::{Image, Scene};
use crate::error::Result;
use crate::macrocell::{CellSpan, CellWalker, MacroCellGrid};
use crate::math::Ray;
use crate::sampler::VolumeSampler;
use rayon::prelude::*;

struct MarchRay {
    pixel: u32,
    ray: Ray,
    walker: CellWalker,
    span: Option<CellSpan>,
    t_enter: f32,
    t_exit: f32,
    /// Next segment index (fixed stepping).
    k: u32,
    /// Start of the next segment (adaptive stepping).
    t: f32,
    color: [f32; 3],
    transmittance: f32,
}

/// Position (as ray parameter) and length of the next shaded segment.
#[derive(Clone, Copy)]
struct Segment {
    t_mid: f32,
    dt: f32,
}

impl MarchRay {
    fn advance_span(&mut self, t: f32) -> Option<CellSpan> {
        loop {
            match self.span {
                Some(s) if t < s.t_exit => return Some(s),
                _ => self.span = Some(self.walker.next()?),
            }
        }
    }

    fn next_segment(&mut self, grid: &MacroCellGrid, scene: &Scene) -> Option<Segment> {
        let o = &scene.options;
        let base = o.base_step;
        loop {
            let probe = if o.adaptive {
                self.t
            } else {
                self.t_enter + (self.k as f32 + 0.5) * base
            };
            if probe >= self.t_exit {
                return None;
            }
            let span = self.advance_span(probe)?;
            let mu = grid.majorant(span.index);
            if o.skip_empty && mu <= 0.0 {
                if o.adaptive {
                    self.t = span.t_exit;
                } else {
                    let next = ((span.t_exit - self.t_enter) / base - 0.5).ceil().max(0.0) as u32;
                    self.k = next.max(self.k + 1);
                }
                continue;
            }
            if !o.adaptive {
                self.k += 1;
                return Some(Segment {
                    t_mid: probe,
                    dt: base,
                });
            }
            let dt = (base / mu.max(o.mu_floor)).min(self.t_exit - self.t);
            self.t += dt;
            return Some(Segment {
                t_mid: probe + 0.5 * dt,
                dt,
            });
        }
    }
}

/// Front-to-back emission-absorption ray march, organized as alternating
/// coordinate, sampling and shading passes over the compacted set of live
/// rays. Rays stay in place; passes work on an index list.
pub fn raymarch_frame(
    camera: &Camera,
    scene: &Scene,
    sampler: &dyn VolumeSampler,
) -> Result<Image> {
    let grid = scene.grid;
    let o = &scene.options;
    let bg = o.background;
    let mut image = Image::filled(camera.width, camera.height, [bg[0], bg[1], bg[2], 0.0]);
    let mut rays: Vec<MarchRay> = generate_rays(camera, &grid.bounds())
        .into_iter()
        .filter_map(|r| {
            let walker = grid.walker(&r.ray)?;
            Some(MarchRay {
                pixel: r.pixel,
                ray: r.ray,
                t_exit: walker.t_end(),
                walker,
                span: None,
                t_enter: r.t_enter,
                k: 0,
                t: r.t_enter,
                color: [0.0; 3],
                transmittance: 1.0,
            })
        })
        .collect();

    let finish = |image: &mut Image, r: &MarchRay| {
        let t = r.transmittance;
        image.pixels[r.pixel as usize] = [
            r.color[0] + t * bg[0],
            r.color[1] + t * bg[1],
            r.color[2] + t * bg[2],
            1.0 - t,
        ];
    };

    let base = o.base_step;
    let mut live: Vec<u32> = (0..rays.len() as u32).collect();
    let mut segments: Vec<Option<Segment>> = Vec::new();
    let mut positions = Vec::new();
    let mut distances = Vec::new();
    while !live.is_empty() {
        let ptr = RaysPtr(rays.as_mut_ptr());
        live.par_iter()
            .map(|&i| {
                // SAFETY: indices in `live` are distinct and in bounds
                let r = unsafe { &mut *ptr.get().add(i as usize) };
                r.next_segment(grid, scene)
            })
            .collect_into_vec(&mut segments);
        positions.clear();
        distances.clear();
        let mut kept = 0;
        for j in 0..live.len() {
            let r = &rays[live[j] as usize];
            match segments[j] {
                Some(s) => {
                    positions.push(r.ray.at(s.t_mid));
                    distances.push(s.t_mid);
                    segments[kept] = Some(s);
                    live[kept] = live[j];
                    kept += 1;
                }
                None => finish(&mut image, r),
            }
        }
        live.truncate(kept);
        if live.is_empty() {
            break;
        }
        let values = sampler.sample(&positions, &distances)?;

        let mut kept = 0;
        for j in 0..live.len() {
            let r = &mut rays[live[j] as usize];
            let s = segments[j].expect("compacted");
            let [cr, cg, cb, a] = scene.tf.eval(values[j]);
            if a > 0.0 {
                let alpha = if s.dt == base {
                    a
                } else {
                    1.0 - (1.0 - a).powf(s.dt / base)
                };
                let w = r.transmittance * alpha;
                r.color[0] += w * cr;
                r.color[1] += w * cg;
                r.color[2] += w * cb;
                r.transmittance *= 1.0 - alpha;
            }
            if r.transmittance < o.early_termination {
                finish(&mut image, r);
            } else {
                live[kept] = live[j];
                kept += 1;
            }
        }
        live.truncate(kept);
    }
    Ok(image)
}

#[derive(Clone, Copy)]
struct RaysPtr(*mut MarchRay);

// SAFETY: only used to hand out disjoint elements to rayon workers
unsafe impl Send for RaysPtr {}
unsafe impl Sync for RaysPtr {}

impl RaysPtr {
    fn get(self) -> *mut MarchRay {
        self.0
    }
}
