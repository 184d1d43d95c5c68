use std::collections::BTreeMap;

use super::{LocationId, Name};
use crate::number::Real;

/// How the location graph was declared.
#[derive(Clone, Debug, PartialEq)]
pub enum Layout {
    /// `grid(cols, rows, torus|bounded)`: locations `x_y`, four-neighbourhood.
    Grid {
        cols: usize,
        rows: usize,
        torus: bool,
    },
    /// Explicit location list and undirected edges.
    Explicit {
        locations: Vec<LocationId>,
        edges: Vec<(LocationId, LocationId)>,
    },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttributeDecl {
    pub default: Option<Real>,
    pub values: BTreeMap<LocationId, Real>,
}

impl AttributeDecl {
    pub fn uniform(v: Real) -> Self {
        AttributeDecl {
            default: Some(v),
            values: BTreeMap::new(),
        }
    }

    pub fn get(&self, loc: &LocationId) -> Option<Real> {
        self.values.get(loc).copied().or(self.default)
    }
}

/// The spatial part of a model: locations, neighbourhood and static
/// per-location attributes.
///
/// Neighbour lists keep multiplicity. On a torus narrower than three cells
/// two directions reach the same cell, and a uniform dispersal sum then
/// offers that cell twice, matching the fixed four-way choice of a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct Habitat {
    layout: Layout,
    locations: Vec<LocationId>,
    neighbors: BTreeMap<LocationId, Vec<LocationId>>,
    pub attributes: BTreeMap<Name, AttributeDecl>,
    pub dispersal: BTreeMap<(LocationId, LocationId), Real>,
}

pub fn grid_name(x: usize, y: usize) -> LocationId {
    LocationId::new(&format!("{x}_{y}"))
}

impl Habitat {
    pub fn grid(cols: usize, rows: usize, torus: bool) -> Self {
        let mut locations = Vec::with_capacity(cols * rows);
        let mut neighbors = BTreeMap::new();
        for x in 0..cols {
            for y in 0..rows {
                let here = grid_name(x, y);
                let (x, y) = (x as i64, y as i64);
                let mut list = Vec::with_capacity(4);
                for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (mut nx, mut ny) = (x + dx, y + dy);
                    if torus {
                        nx = nx.rem_euclid(cols as i64);
                        ny = ny.rem_euclid(rows as i64);
                    } else if nx < 0 || ny < 0 || nx >= cols as i64 || ny >= rows as i64 {
                        continue;
                    }
                    list.push(grid_name(nx as usize, ny as usize));
                }
                neighbors.insert(here.clone(), list);
                locations.push(here);
            }
        }
        Habitat {
            layout: Layout::Grid { cols, rows, torus },
            locations,
            neighbors,
            attributes: BTreeMap::new(),
            dispersal: BTreeMap::new(),
        }
    }

    pub fn explicit(locations: Vec<LocationId>, edges: Vec<(LocationId, LocationId)>) -> Self {
        let mut neighbors: BTreeMap<LocationId, Vec<LocationId>> =
            locations.iter().map(|l| (l.clone(), Vec::new())).collect();
        for (a, b) in &edges {
            neighbors.entry(a.clone()).or_default().push(b.clone());
            neighbors.entry(b.clone()).or_default().push(a.clone());
        }
        Habitat {
            layout: Layout::Explicit {
                locations: locations.clone(),
                edges,
            },
            locations,
            neighbors,
            attributes: BTreeMap::new(),
            dispersal: BTreeMap::new(),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn locations(&self) -> &[LocationId] {
        &self.locations
    }

    pub fn contains(&self, loc: &LocationId) -> bool {
        self.neighbors.contains_key(loc) && self.locations.contains(loc)
    }

    /// Neighbour entries of `loc` in declaration order, with multiplicity.
    pub fn neighbors(&self, loc: &LocationId) -> &[LocationId] {
        self.neighbors.get(loc).map(Vec::as_slice).unwrap_or(&[])
    }

    pub(crate) fn neighbor_lists(&self) -> &BTreeMap<LocationId, Vec<LocationId>> {
        &self.neighbors
    }

    pub fn is_neighbor(&self, from: &LocationId, to: &LocationId) -> bool {
        from != to && self.neighbors(from).contains(to)
    }

    pub fn attribute(&self, name: &Name, loc: &LocationId) -> Option<Real> {
        self.attributes.get(name)?.get(loc)
    }

    pub fn set_attribute(&mut self, name: Name, decl: AttributeDecl) {
        self.attributes.insert(name, decl);
    }

    pub fn dispersal(&self, from: &LocationId, to: &LocationId) -> Option<Real> {
        self.dispersal.get(&(from.clone(), to.clone())).copied()
    }

    pub fn set_dispersal(&mut self, from: LocationId, to: LocationId, p: Real) {
        self.dispersal.insert((from, to), p);
    }
}
