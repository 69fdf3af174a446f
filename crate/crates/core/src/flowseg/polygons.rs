//! Instance contours along pixel edges.
//!
//! Marching squares on the pixel-corner lattice of each instance's binary
//! mask: every boundary edge is emitted with the interior on its right
//! (screen coordinates, y down), and at saddle corners the trace turns
//! right first so that the foreground is treated as 4-connected. Collinear
//! vertices are then collapsed. Exterior rings have positive shoelace area
//! in `(x, y) = (col, row)` coordinates, holes negative.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::flowseg::maps::InstanceMap;

pub type Ring = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq)]
pub struct InstancePolygon {
    pub instance_id: i32,
    /// Closed ring (first vertex repeated last).
    pub exterior: Ring,
    pub holes: Vec<Ring>,
    pub pixel_area: u64,
}

impl InstancePolygon {
    /// Enclosed area: exterior minus holes.
    pub fn area(&self) -> f64 {
        shoelace(&self.exterior) + self.holes.iter().map(|h| shoelace(h)).sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        std::iter::once(&self.exterior).chain(&self.holes).map(|r| ring_length(r)).sum()
    }
}

pub fn shoelace(ring: &[[f64; 2]]) -> f64 {
    ring.windows(2).map(|p| p[0][0] * p[1][1] - p[1][0] * p[0][1]).sum::<f64>() / 2.0
}

fn ring_length(ring: &[[f64; 2]]) -> f64 {
    ring.windows(2).map(|p| ((p[1][0] - p[0][0]).powi(2) + (p[1][1] - p[0][1]).powi(2)).sqrt()).sum()
}

// Right, Down, Left, Up: each successor is a right turn in screen coordinates.
const STEPS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

struct EdgeGrid {
    x0: i64,
    y0: i64,
    vw: usize,
    /// Bitmask of outgoing directions per lattice vertex.
    out: Vec<u8>,
}

impl EdgeGrid {
    fn idx(&self, x: i64, y: i64) -> usize {
        (y - self.y0) as usize * self.vw + (x - self.x0) as usize
    }
}

fn trace_instance(inst: &InstanceMap, id: i32, pixels: &[usize]) -> Result<InstancePolygon> {
    let (h, w) = (inst.height as i64, inst.width as i64);
    let inside = |y: i64, x: i64| y >= 0 && x >= 0 && y < h && x < w && inst.labels[(y * w + x) as usize] == id;
    let (mut minx, mut miny, mut maxx, mut maxy) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
    for &p in pixels {
        let (y, x) = ((p as i64) / w, (p as i64) % w);
        minx = minx.min(x);
        miny = miny.min(y);
        maxx = maxx.max(x);
        maxy = maxy.max(y);
    }
    let vw = (maxx - minx + 2) as usize;
    let vh = (maxy - miny + 2) as usize;
    let mut grid = EdgeGrid { x0: minx, y0: miny, vw, out: vec![0; vw * vh] };
    let mut n_edges = 0usize;
    for &p in pixels {
        let (y, x) = ((p as i64) / w, (p as i64) % w);
        let mut add = |vx: i64, vy: i64, dir: u8| {
            let i = grid.idx(vx, vy);
            grid.out[i] |= 1 << dir;
            n_edges += 1;
        };
        if !inside(y - 1, x) {
            add(x, y, 0);
        }
        if !inside(y, x + 1) {
            add(x + 1, y, 1);
        }
        if !inside(y + 1, x) {
            add(x + 1, y + 1, 2);
        }
        if !inside(y, x - 1) {
            add(x, y + 1, 3);
        }
    }

    let mut rings: Vec<Ring> = Vec::new();
    let mut used = 0usize;
    let mut scan = 0usize;
    while used < n_edges {
        while grid.out[scan] == 0 {
            scan += 1;
        }
        let sx = grid.x0 + (scan % vw) as i64;
        let sy = grid.y0 + (scan / vw) as i64;
        let start_dir = grid.out[scan].trailing_zeros() as u8;
        let mut ring: Ring = vec![[sx as f64, sy as f64]];
        let (mut x, mut y, mut dir) = (sx, sy, start_dir);
        loop {
            let i = grid.idx(x, y);
            grid.out[i] &= !(1 << dir);
            used += 1;
            x += STEPS[dir as usize].0;
            y += STEPS[dir as usize].1;
            let j = grid.idx(x, y);
            let at_start = (x, y) == (sx, sy);
            let next = [(dir + 1) % 4, dir, (dir + 3) % 4]
                .into_iter()
                .find(|&d| grid.out[j] & (1 << d) != 0 || (at_start && d == start_dir));
            match next {
                Some(d) if at_start && d == start_dir => break,
                Some(d) => {
                    if d != dir {
                        ring.push([x as f64, y as f64]);
                    }
                    dir = d;
                }
                None => return Err(Error::Invariant(format!("open contour for instance {}", id))),
            }
        }
        // the start vertex is a corner unless the closing edge continues straight
        if dir == start_dir && ring.len() > 1 {
            ring.remove(0);
        }
        let first = ring[0];
        ring.push(first);
        rings.push(ring);
    }

    let (exteriors, holes): (Vec<Ring>, Vec<Ring>) = rings.into_iter().partition(|r| shoelace(r) > 0.0);
    if exteriors.len() != 1 {
        return Err(Error::Invariant(format!(
            "instance {} has {} outer contours; it is not 4-connected",
            id,
            exteriors.len()
        )));
    }
    Ok(InstancePolygon {
        instance_id: id,
        exterior: exteriors.into_iter().next().unwrap(),
        holes,
        pixel_area: pixels.len() as u64,
    })
}

/// One closed polygon per instance, vertices at pixel corners.
pub fn instances_to_polygons(inst: &InstanceMap) -> Result<Vec<InstancePolygon>> {
    let k = inst.num_instances();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k + 1];
    for (i, &l) in inst.labels.iter().enumerate() {
        if l > 0 {
            members[l as usize].push(i);
        }
    }
    (1..=k).filter(|&id| !members[id].is_empty()).map(|id| trace_instance(inst, id as i32, &members[id])).collect()
}

const PALETTE: [u32; 8] = [0xC80000, 0x00A000, 0x0050C8, 0xC8A000, 0xA000C8, 0x00B4B4, 0x606060, 0xFF7800];

/// Packed opaque ARGB color for a class, as a signed integer (the
/// convention of common slide viewers).
pub fn class_color(class_id: i32) -> i32 {
    let rgb = PALETTE[(class_id.max(1) as usize - 1) % PALETTE.len()];
    (0xFF00_0000 | rgb) as i32
}

/// GeoJSON FeatureCollection, one Polygon feature per instance.
///
/// `classes[k-1]` is the class of instance `k`; `vocabulary[c]` names class
/// `c` (index 0 = background).
pub fn polygons_to_geojson(polys: &[InstancePolygon], classes: &[i32], vocabulary: &[String]) -> Result<Value> {
    let features = polys
        .iter()
        .map(|p| {
            let class_id = *classes
                .get(p.instance_id as usize - 1)
                .ok_or_else(|| Error::InvalidInput(format!("no class for instance {}", p.instance_id)))?;
            let class_name =
                vocabulary.get(class_id.max(0) as usize).cloned().unwrap_or_else(|| format!("class_{}", class_id));
            let mut coords = vec![p.exterior.clone()];
            coords.extend(p.holes.iter().cloned());
            Ok(json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": coords },
                "properties": {
                    "instance_id": p.instance_id,
                    "class_id": class_id,
                    "class_name": class_name,
                    "pixel_area": p.pixel_area,
                    "classification": { "name": class_name, "colorRGB": class_color(class_id) },
                }
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}
