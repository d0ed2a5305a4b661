//! SVG rendering of one frame: colored target boxes, interaction chords
//! between partners, and the scene banner.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::eval::TrackSet;
use crate::types::{Collective, Interaction};

/// Fixed palette; a target keeps its color for its whole life.
const PALETTE: [&str; 12] = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6", "#bcf60c",
    "#fabebe", "#008080", "#e6beff", "#9a6324",
];

pub fn target_color(id: u64) -> &'static str {
    PALETTE[(id % PALETTE.len() as u64) as usize]
}

/// What to draw for one frame.
pub struct FrameScene<'a> {
    pub frame: u64,
    pub tracks: &'a TrackSet,
    /// committed pairwise labels to draw as chords
    pub interactions: &'a BTreeMap<(u64, u64), (Interaction, f64)>,
    pub scene: Option<Collective>,
    /// canvas size, px
    pub size: (u32, u32),
}

/// Render one frame as a standalone SVG document.
pub fn render_frame(scene: &FrameScene) -> String {
    let (w, h) = scene.size;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"##
    );
    let _ = writeln!(svg, r##"<rect width="{w}" height="{h}" fill="#202020"/>"##);

    // interaction chords under the boxes
    for (&(i, j), &(label, _)) in scene.interactions {
        let (Some(a), Some(b)) = (foot(scene, i), foot(scene, j)) else {
            continue;
        };
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ffffff" stroke-width="1.5" stroke-dasharray="4 3"/>"##,
            a.0, a.1, b.0, b.1
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" fill="#ffffff" font-size="11" text-anchor="middle">{:?}</text>"##,
            (a.0 + b.0) / 2.0,
            (a.1 + b.1) / 2.0 - 4.0,
            label
        );
    }

    for (&id, frames) in scene.tracks {
        let Some(b) = frames.get(&scene.frame) else {
            continue;
        };
        let color = target_color(id);
        let _ = writeln!(
            svg,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="{color}" stroke-width="2"/>"##,
            b.x, b.y, b.w, b.h
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" fill="{color}" font-size="12">{id}</text>"##,
            b.x,
            b.y - 3.0
        );
    }

    if let Some(label) = scene.scene {
        let _ = writeln!(
            svg,
            r##"<text x="8" y="18" fill="#ffff66" font-size="16">{label:?} (frame {})</text>"##,
            scene.frame
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn foot(scene: &FrameScene, id: u64) -> Option<(f64, f64)> {
    let b = scene.tracks.get(&id)?.get(&scene.frame)?;
    let p = b.foot_point();
    Some((p[0], p[1]))
}
