use std::collections::VecDeque;

use bitflags::bitflags;
use serde::Serialize;

use crate::asymptotics::singularity_line;
use crate::error::{Error, Result};
use crate::model::ChemostatParams;

bitflags! {
    /// Which boundaries a grid node touches.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct BoundaryTag: u8 {
        const OUTER_X = 1;
        const OUTER_Y = 1 << 1;
        /// On the line `y_bar = 0`.
        const AXIS_X = 1 << 2;
        /// On the line `x_bar = 0`.
        const AXIS_Y = 1 << 3;
        /// Has a masked-out neighbour below the cut line.
        const CUT = 1 << 4;
    }
}

const INACTIVE: u32 = u32::MAX;

/// Node grid on `[0, x_max] x [0, y_max]` with the corner below the cut line
/// removed. Node `(i, j)` sits at `(i hx, j hy)`; its control volume is the
/// surrounding rectangle clipped to the box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolygonDomain {
    pub x_max: f64,
    pub y_max: f64,
    pub cut_offset: f64,
    pub hx: f64,
    pub hy: f64,
    /// The cut line is `y = intercept + slope x`.
    pub slope: f64,
    pub intercept: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(skip)]
    index: Vec<u32>,
    #[serde(skip)]
    nodes: Vec<(usize, usize)>,
    #[serde(skip)]
    tags: Vec<BoundaryTag>,
}

fn steps(extent: f64, h: f64, name: &'static str) -> Result<usize> {
    if !(h > 0.0 && extent > 0.0 && h.is_finite() && extent.is_finite()) {
        return Err(Error::param(name, "grid extent and spacing must be positive"));
    }
    let n = (extent / h).round();
    if (n * h - extent).abs() > 1e-9 * extent || n < 2.0 {
        return Err(Error::param(name, format!("spacing {h} must divide extent {extent} at least twice")));
    }
    Ok(n as usize)
}

/// Masks a structured grid to the corner-cut polygon.
pub fn build_domain(
    params: &ChemostatParams,
    x_max: f64,
    y_max: f64,
    cut_offset: f64,
    hx: f64,
    hy: f64,
) -> Result<PolygonDomain> {
    params.validate()?;
    if !(cut_offset > 0.0) {
        return Err(Error::param("cut_offset", "must be positive so no node touches the singularity line"));
    }
    let nx = steps(x_max, hx, "hx")?;
    let ny = steps(y_max, hy, "hy")?;
    let intercept = singularity_line(params, 0.0) + cut_offset;
    let slope = -params.curve_x.asymptote() / params.curve_y.asymptote();
    let mut dom = PolygonDomain {
        x_max,
        y_max,
        cut_offset,
        hx,
        hy,
        slope,
        intercept,
        nx,
        ny,
        index: vec![INACTIVE; (nx + 1) * (ny + 1)],
        nodes: Vec::new(),
        tags: Vec::new(),
    };
    for i in 0..=nx {
        for j in 0..=ny {
            if dom.y(j) >= dom.cut_line(dom.x(i)) - 1e-12 {
                dom.index[i * (ny + 1) + j] = dom.nodes.len() as u32;
                dom.nodes.push((i, j));
            }
        }
    }
    if dom.nodes.is_empty() {
        return Err(Error::Domain("no grid node lies above the cut line".into()));
    }
    let tags = dom.nodes.iter().map(|&(i, j)| dom.classify(i, j)).collect();
    dom.tags = tags;
    dom.check_connected()?;
    Ok(dom)
}

impl PolygonDomain {
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    pub fn cut_line(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Where the cut line meets the `x_bar` axis.
    pub fn cut_x_intercept(&self) -> f64 {
        -self.intercept / self.slope
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Linear index of an active node.
    #[inline]
    pub fn active(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 || i as usize > self.nx || j as usize > self.ny {
            return None;
        }
        let k = self.index[i as usize * (self.ny + 1) + j as usize];
        (k != INACTIVE).then_some(k as usize)
    }

    pub fn node(&self, k: usize) -> (usize, usize) {
        self.nodes[k]
    }

    pub fn position(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.nodes[k];
        (self.x(i), self.y(j))
    }

    pub fn tag(&self, k: usize) -> BoundaryTag {
        self.tags[k]
    }

    /// Control-volume widths of node `(i, j)`.
    #[inline]
    pub fn widths(&self, i: usize, j: usize) -> (f64, f64) {
        let wx = if i == 0 || i == self.nx { 0.5 * self.hx } else { self.hx };
        let wy = if j == 0 || j == self.ny { 0.5 * self.hy } else { self.hy };
        (wx, wy)
    }

    pub fn area(&self, k: usize) -> f64 {
        let (i, j) = self.nodes[k];
        let (wx, wy) = self.widths(i, j);
        wx * wy
    }

    fn classify(&self, i: usize, j: usize) -> BoundaryTag {
        let mut t = BoundaryTag::empty();
        if i == self.nx {
            t |= BoundaryTag::OUTER_X;
        }
        if j == self.ny {
            t |= BoundaryTag::OUTER_Y;
        }
        if j == 0 {
            t |= BoundaryTag::AXIS_X;
        }
        if i == 0 {
            t |= BoundaryTag::AXIS_Y;
        }
        let (ii, jj) = (i as isize, j as isize);
        let in_box = |a: isize, b: isize| a >= 0 && b >= 0 && a as usize <= self.nx && b as usize <= self.ny;
        for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            if in_box(ii + di, jj + dj) && self.active(ii + di, jj + dj).is_none() {
                t |= BoundaryTag::CUT;
            }
        }
        t
    }

    fn check_connected(&self) -> Result<()> {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(k) = queue.pop_front() {
            let (i, j) = (self.nodes[k].0 as isize, self.nodes[k].1 as isize);
            for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                if let Some(n) = self.active(i + di, j + dj) {
                    if !seen[n] {
                        seen[n] = true;
                        count += 1;
                        queue.push_back(n);
                    }
                }
            }
        }
        if count != self.nodes.len() {
            return Err(Error::Domain(format!("active set is disconnected ({count} of {} nodes reachable)", self.nodes.len())));
        }
        Ok(())
    }
}
