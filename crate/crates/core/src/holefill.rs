//! Orientation-aware hole filling.
//!
//! The blade is assumed to traverse the image. Its orientation is read off the
//! accumulated mask gradients, the two image borders it crosses get their
//! foreground spans bridged, and a 4-connected border flood fill turns every
//! enclosed background region into foreground.

use std::collections::VecDeque;

use crate::raster::BinaryMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BladeOrientation {
    /// Blade runs top to bottom; crosses the top and bottom rows.
    Vertical,
    /// Blade runs left to right; crosses the left and right columns.
    Horizontal,
}

impl BladeOrientation {
    pub fn opposite(self) -> Self {
        match self {
            BladeOrientation::Vertical => BladeOrientation::Horizontal,
            BladeOrientation::Horizontal => BladeOrientation::Vertical,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BladeOrientation::Vertical => "vertical",
            BladeOrientation::Horizontal => "horizontal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OrientationReport {
    pub orientation: BladeOrientation,
    /// Σ |m(h, w+1) − m(h, w)|
    pub gx: u64,
    /// Σ |m(h+1, w) − m(h, w)|
    pub gy: u64,
}

/// Accumulated absolute differences along x and y, then `Vertical` iff `gx ≥ gy`.
pub fn orientation_report(mask: &BinaryMask) -> OrientationReport {
    let (height, width) = mask.dims();
    let m = mask.as_slice();
    let mut gx = 0u64;
    let mut gy = 0u64;
    for h in 0..height {
        let row = &m[h * width..(h + 1) * width];
        gx += row.windows(2).filter(|p| p[0] != p[1]).count() as u64;
        if h + 1 < height {
            let next = &m[(h + 1) * width..(h + 2) * width];
            gy += row.iter().zip(next).filter(|(a, b)| a != b).count() as u64;
        }
    }
    let orientation = if gx >= gy {
        BladeOrientation::Vertical
    } else {
        BladeOrientation::Horizontal
    };
    OrientationReport { orientation, gx, gy }
}

pub fn detect_orientation(mask: &BinaryMask) -> BladeOrientation {
    orientation_report(mask).orientation
}

/// Sets every pixel strictly between the first and last foreground pixel of a line.
fn bridge_line(mask: &mut BinaryMask, coords: &[(usize, usize)]) {
    let on: Vec<usize> = coords
        .iter()
        .enumerate()
        .filter(|(_, &(h, w))| *mask.get(h, w))
        .map(|(i, _)| i)
        .collect();
    if on.len() < 2 {
        return;
    }
    for &(h, w) in &coords[on[0]..=on[on.len() - 1]] {
        mask.set(h, w, true);
    }
}

/// Closes gaps between blade-border pixels on the two borders the blade crosses.
pub fn enforce_border_continuity(mask: &BinaryMask, orientation: BladeOrientation) -> BinaryMask {
    let mut out = mask.clone();
    let (height, width) = mask.dims();
    let lines: Vec<Vec<(usize, usize)>> = match orientation {
        BladeOrientation::Vertical => [0, height - 1]
            .iter()
            .map(|&h| (0..width).map(|w| (h, w)).collect())
            .collect(),
        BladeOrientation::Horizontal => [0, width - 1]
            .iter()
            .map(|&w| (0..height).map(|h| (h, w)).collect())
            .collect(),
    };
    for line in &lines {
        bridge_line(&mut out, line);
    }
    out
}

/// Background pixels not 4-connected to the image border through background
/// become foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (height, width) = mask.dims();
    let m = mask.as_slice();
    let mut reached = vec![false; m.len()];
    let mut queue = VecDeque::new();
    let seed = |i: usize, reached: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        if !m[i] && !reached[i] {
            reached[i] = true;
            queue.push_back(i);
        }
    };
    for w in 0..width {
        seed(w, &mut reached, &mut queue);
        seed((height - 1) * width + w, &mut reached, &mut queue);
    }
    for h in 0..height {
        seed(h * width, &mut reached, &mut queue);
        seed(h * width + width - 1, &mut reached, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (h, w) = (i / width, i % width);
        if h > 0 {
            seed(i - width, &mut reached, &mut queue);
        }
        if h + 1 < height {
            seed(i + width, &mut reached, &mut queue);
        }
        if w > 0 {
            seed(i - 1, &mut reached, &mut queue);
        }
        if w + 1 < width {
            seed(i + 1, &mut reached, &mut queue);
        }
    }
    let mut out = mask.clone();
    for (v, r) in out.as_mut_slice().iter_mut().zip(&reached) {
        *v = !*r;
    }
    out
}

/// Orientation detection, border bridging, then flood fill.
pub fn blade_hole_fill(mask: &BinaryMask) -> BinaryMask {
    let orientation = detect_orientation(mask);
    fill_holes(&enforce_border_continuity(mask, orientation))
}
