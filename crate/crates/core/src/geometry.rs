//! Farm layout and direction-dependent wake adjacency.
//!
//! Wind direction `phi` is the direction the wind blows *toward*, measured
//! counterclockwise from the +x axis, in radians. In the frame rotated by
//! `phi` the wind travels along +x, so "downstream" means a larger rotated
//! x coordinate.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::angle;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Turbine {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

/// Turbine positions (metres) with a farm-wide rotor geometry.
///
/// Ids run `1..=S` in list order; index `s - 1` addresses turbine `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmLayout {
    pub rotor_diameter: f64,
    pub hub_height: f64,
    pub turbines: Vec<Turbine>,
}

impl FarmLayout {
    pub fn new(rotor_diameter: f64, hub_height: f64, positions: &[(f64, f64)]) -> Result<Self> {
        let turbines = positions
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| Turbine { id: k + 1, x, y })
            .collect();
        let layout = FarmLayout {
            rotor_diameter,
            hub_height,
            turbines,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Regular `rows × cols` grid with the given spacing in rotor diameters.
    /// Ids increase along x first, then y.
    pub fn grid(
        rows: usize,
        cols: usize,
        spacing_diameters: f64,
        rotor_diameter: f64,
        hub_height: f64,
    ) -> Result<Self> {
        let spacing = spacing_diameters * rotor_diameter;
        let positions: Vec<_> = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (c as f64 * spacing, r as f64 * spacing)))
            .collect();
        Self::new(rotor_diameter, hub_height, &positions)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rotor_diameter.is_finite() && self.rotor_diameter > 0.0) {
            return Err(Error::input(format!(
                "rotor_diameter must be positive, got {}",
                self.rotor_diameter
            )));
        }
        if self.turbines.is_empty() {
            return Err(Error::input("layout has no turbines"));
        }
        for (k, t) in self.turbines.iter().enumerate() {
            if t.id != k + 1 {
                return Err(Error::input(format!(
                    "turbine ids must be consecutive from 1; position {} has id {}",
                    k, t.id
                )));
            }
            if !(t.x.is_finite() && t.y.is_finite()) {
                return Err(Error::input(format!(
                    "turbine {} has a non-finite position",
                    t.id
                )));
            }
        }
        for (a, ta) in self.turbines.iter().enumerate() {
            for tb in &self.turbines[a + 1..] {
                let sep = (ta.x - tb.x).hypot(ta.y - tb.y);
                if sep <= self.rotor_diameter {
                    return Err(Error::input(format!(
                        "turbines {} and {} are {:.3} m apart, closer than one rotor diameter",
                        ta.id, tb.id, sep
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.turbines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turbines.is_empty()
    }

    pub fn rotor_radius(&self) -> f64 {
        0.5 * self.rotor_diameter
    }

    /// Position of every turbine in the frame where the wind blows along +x:
    /// `(along-wind, crosswind)`.
    pub fn wind_frame(&self, phi: f64) -> Vec<(f64, f64)> {
        let (sin, cos) = phi.sin_cos();
        self.turbines
            .iter()
            .map(|t| (t.x * cos + t.y * sin, -t.x * sin + t.y * cos))
            .collect()
    }

    /// Returns a copy rotated counterclockwise about the origin by `delta`.
    pub fn rotated(&self, delta: f64) -> FarmLayout {
        let (sin, cos) = delta.sin_cos();
        FarmLayout {
            rotor_diameter: self.rotor_diameter,
            hub_height: self.hub_height,
            turbines: self
                .turbines
                .iter()
                .map(|t| Turbine {
                    id: t.id,
                    x: t.x * cos - t.y * sin,
                    y: t.x * sin + t.y * cos,
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let layout: FarmLayout = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        layout.validate().map_err(|e| Error::format(path, e))?;
        Ok(layout)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WakeGeometryParams {
    /// Growth of the wake radius per metre travelled downstream.
    pub expansion_coefficient: f64,
    pub max_wake_length: f64,
    /// Turbines closer than this (along the wind) are never considered waked.
    pub near_wake_offset: f64,
}

impl Default for WakeGeometryParams {
    fn default() -> Self {
        WakeGeometryParams {
            expansion_coefficient: 0.075,
            max_wake_length: 2000.0,
            near_wake_offset: 0.0,
        }
    }
}

impl WakeGeometryParams {
    pub fn validate(&self) -> Result<()> {
        let k = self.expansion_coefficient;
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::input(format!(
                "expansion_coefficient must be positive, got {k}"
            )));
        }
        if !(self.max_wake_length.is_finite() && self.max_wake_length > 0.0) {
            return Err(Error::input(format!(
                "max_wake_length must be positive, got {}",
                self.max_wake_length
            )));
        }
        if !(self.near_wake_offset.is_finite() && self.near_wake_offset >= 0.0) {
            return Err(Error::input(format!(
                "near_wake_offset must be non-negative, got {}",
                self.near_wake_offset
            )));
        }
        Ok(())
    }

    /// Whether a turbine at along-wind distance `d` and crosswind offset
    /// `cross` from an upstream rotor lies in that rotor's wake cone.
    /// Points exactly on the cone edge are inside.
    pub fn in_cone(&self, d: f64, cross: f64, rotor_radius: f64) -> bool {
        d > self.near_wake_offset
            && d <= self.max_wake_length
            && cross.abs() <= rotor_radius + self.expansion_coefficient * d
    }
}

/// Binary wake adjacency for one wind direction: `w(i, s) = 1` when turbine
/// `s` sits in the wake of turbine `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WakeGraph {
    phi: f64,
    n: usize,
    weights: Vec<bool>,
}

impl WakeGraph {
    /// Builds a graph from an explicit edge list of 1-based `(from, to)` ids.
    /// Rejects self-loops, out-of-range ids and cycles.
    pub fn from_edges(phi: f64, n_turbines: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if !angle::is_valid_direction(phi) {
            return Err(Error::input(format!(
                "wind direction {phi} is outside [0, 2π)"
            )));
        }
        let mut graph = WakeGraph {
            phi,
            n: n_turbines,
            weights: vec![false; n_turbines * n_turbines],
        };
        for &(from, to) in edges {
            if from == 0 || to == 0 || from > n_turbines || to > n_turbines {
                return Err(Error::input(format!(
                    "edge {from}->{to} references a turbine outside 1..={n_turbines}"
                )));
            }
            if from == to {
                return Err(Error::input(format!("self-loop on turbine {from}")));
            }
            graph.weights[(from - 1) * n_turbines + (to - 1)] = true;
        }
        topological_order(&graph).map_err(|_| Error::input("edge list contains a cycle"))?;
        Ok(graph)
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn n_turbines(&self) -> usize {
        self.n
    }

    /// `w(from, to)` with 1-based ids.
    pub fn weight(&self, from: usize, to: usize) -> bool {
        self.weights[(from - 1) * self.n + (to - 1)]
    }

    /// Upstream neighbours of `s` (ids `i` with `w(i, s) = 1`), ascending.
    pub fn upstream(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (1..=self.n).filter(move |&i| self.weight(i, s))
    }

    /// All edges as `(from, to)` pairs in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 1..=self.n {
            for s in 1..=self.n {
                if self.weight(i, s) {
                    out.push((i, s));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w).count()
    }

    /// Edge list as `from,to` CSV.
    pub fn to_edge_csv(&self) -> String {
        let mut out = String::from("from,to\n");
        for (i, s) in self.edges() {
            let _ = writeln!(out, "{i},{s}");
        }
        out
    }
}

pub fn build_wake_graph(
    layout: &FarmLayout,
    phi: f64,
    params: &WakeGeometryParams,
) -> Result<WakeGraph> {
    if !angle::is_valid_direction(phi) {
        return Err(Error::input(format!(
            "wind direction {phi} is outside [0, 2π)"
        )));
    }
    params.validate()?;
    let n = layout.len();
    let frame = layout.wind_frame(phi);
    let r0 = layout.rotor_radius();
    let mut weights = vec![false; n * n];
    for (i, &(ai, ci)) in frame.iter().enumerate() {
        for (s, &(as_, cs)) in frame.iter().enumerate() {
            if i != s && params.in_cone(as_ - ai, cs - ci, r0) {
                weights[i * n + s] = true;
            }
        }
    }
    Ok(WakeGraph { phi, n, weights })
}

/// Orders turbine ids so that every edge points forward; ties go to the
/// smaller id.
pub fn topological_order(graph: &WakeGraph) -> Result<Vec<usize>> {
    let n = graph.n;
    let mut indegree = vec![0usize; n + 1];
    for (_, s) in graph.edges() {
        indegree[s] += 1;
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (1..=n).filter(|&s| indegree[s] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for (s, deg) in indegree.iter_mut().enumerate().skip(1) {
            if graph.weight(i, s) {
                *deg -= 1;
                if *deg == 0 {
                    ready.push(Reverse(s));
                }
            }
        }
    }
    if order.len() != n {
        return Err(Error::Invariant(format!(
            "wake graph at phi={} contains a cycle",
            graph.phi
        )));
    }
    Ok(order)
}
