//! Top-down PNG renderings of a belief or ground truth, optionally replayed
//! from an episode trace up to a given viewpoint.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::belief::BeliefGrid;
use crate::camera::apply_viewpoint;
use crate::error::{Error, Result};
use crate::grid::{CellState, RegionMask, VoxelStates};
use crate::scene::GroundTruthScene;
use crate::trace::{Trace, TraceEvent};

pub const CELL_PIXELS: u32 = 8;

const FREE: Rgb<u8> = Rgb([245, 245, 245]);
const UNOBSERVED: Rgb<u8> = Rgb([110, 110, 110]);
const WALL: Rgb<u8> = Rgb([30, 30, 30]);
const TARGET: Rgb<u8> = Rgb([220, 40, 40]);
const SWEEP: [f64; 3] = [60.0, 140.0, 255.0];

/// Distinct hue per object id; id 0 is left to the target colour.
fn object_colour(id: u32) -> Rgb<u8> {
    let h = (id as f64 * 0.618_033_988_75).fract();
    let (r, g, b) = hsv(h, 0.55, 0.85);
    Rgb([r, g, b])
}

fn hsv(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    let (r, g, b) = match i as i32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    ((r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8)
}

/// Max projection along z. A column shows the first occupied cell from the
/// top, else grey if anything in it is unobserved, else free. Wall columns
/// (side and back walls) are dark. The open face is the bottom row.
pub fn render_top_down(grid: &impl VoxelStates, target: Option<u32>, sweep: Option<&RegionMask>) -> RgbImage {
    let spec = *grid.spec();
    let [nx, ny, nz] = spec.dims.map(|n| n as i32);
    let mut img = RgbImage::new(nx as u32 * CELL_PIXELS, ny as u32 * CELL_PIXELS);
    for i in 0..nx {
        for j in 0..ny {
            let mut colour = FREE;
            let mut swept = false;
            if i == 0 || i == nx - 1 || j == ny - 1 {
                colour = WALL;
            } else {
                let mut unobserved = false;
                let mut hit = None;
                for k in (1..nz - 1).rev() {
                    let idx = spec.index_unchecked([i, j, k]);
                    swept |= sweep.is_some_and(|s| s.contains(idx));
                    match grid.state(idx) {
                        CellState::Occupied(id) if hit.is_none() => hit = Some(id.0),
                        CellState::Unobserved => unobserved = true,
                        _ => {}
                    }
                }
                if let Some(id) = hit {
                    colour = if Some(id) == target { TARGET } else { object_colour(id) };
                } else if unobserved {
                    colour = UNOBSERVED;
                }
            }
            if swept {
                let c = colour.0;
                colour = Rgb(std::array::from_fn(|n| (0.5 * c[n] as f64 + 0.5 * SWEEP[n]) as u8));
            }
            let row = (ny - 1 - j) as u32;
            for dy in 0..CELL_PIXELS {
                for dx in 0..CELL_PIXELS {
                    img.put_pixel(i as u32 * CELL_PIXELS + dx, row * CELL_PIXELS + dy, colour);
                }
            }
        }
    }
    img
}

/// Belief after the first `step` viewpoints of `trace`, with the target sweep
/// once the trace has recorded it before that point.
pub fn replay_trace(trace: &Trace, step: usize) -> Result<(GroundTruthScene, BeliefGrid, Option<RegionMask>)> {
    let (file, intrinsics) = trace.header().ok_or_else(|| Error::Format("trace has no header".into()))?;
    let total = trace.viewpoint_count();
    if step > total {
        return Err(Error::Format(format!("step {step} out of range, trace has {total} viewpoints")));
    }
    let gt = GroundTruthScene::from_file(file)?;
    let mut belief = BeliefGrid::new(gt.spec);
    let mut sweep = None;
    let mut applied = 0;
    for e in &trace.events {
        if applied == step && sweep.is_some() {
            break;
        }
        match e {
            TraceEvent::Reachability { sweep: cells, .. } => {
                sweep = Some(RegionMask::from_cells(&gt.spec, cells.iter().copied()));
            }
            TraceEvent::Viewpoint { .. } if applied < step => {
                let vp = e.viewpoint().expect("viewpoint event");
                apply_viewpoint(&gt, &mut belief, &vp, intrinsics)?;
                applied += 1;
            }
            TraceEvent::Viewpoint { .. } => break,
            _ => {}
        }
    }
    Ok((gt, belief, sweep))
}

pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Format(other.to_string()),
    })
}
