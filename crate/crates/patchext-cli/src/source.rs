use std::path::PathBuf;

use clap::{Args, ValueEnum};
use patchext::fixtures;
use patchext::mesh::TetMesh;
use patchext::topology::{Marker, PatchMesh};

use crate::report::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fixture {
    CubeStar,
    OctahedronStar,
    DistortedStar,
    RandomStar,
    HalfCube,
    HalfOctahedron,
    HalfStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Markers {
    Dirichlet,
    Neumann,
    Mixed,
}

/// Where the patch comes from: a built-in family or the star of a mesh vertex.
#[derive(Debug, Clone, Args)]
pub struct PatchSource {
    /// Built-in patch (default: cube-star).
    #[arg(long, value_enum, conflicts_with = "mesh")]
    pub fixture: Option<Fixture>,
    /// Mesh file in the tetmesh v1 format.
    #[arg(long, requires = "vertex")]
    pub mesh: Option<PathBuf>,
    /// Mesh vertex whose star is used.
    #[arg(long, requires = "mesh")]
    pub vertex: Option<usize>,
    /// Boundary markers of the half-* fixtures.
    #[arg(long, value_enum, default_value = "dirichlet")]
    pub markers: Markers,
}

impl PatchSource {
    pub fn name(&self) -> String {
        match (&self.mesh, self.vertex) {
            (Some(p), Some(v)) => format!("{}#{v}", p.display()),
            _ => self.fixture.unwrap_or(Fixture::CubeStar).to_possible_value().unwrap().get_name().to_string(),
        }
    }

    /// The patch and, for mesh stars, the global id of every patch vertex.
    pub fn build(&self, seed: u64) -> Result<(PatchMesh, Option<Vec<usize>>), Failure> {
        if let (Some(path), Some(v)) = (&self.mesh, self.vertex) {
            let mesh = TetMesh::read(path)?;
            if v >= mesh.vertices.len() {
                return Err(Failure::Usage(format!("vertex {v} out of range ({} vertices)", mesh.vertices.len())));
            }
            let vp = mesh.vertex_patch(v)?;
            return Ok((vp.patch, Some(vp.global)));
        }
        let m = |i: usize| match self.markers {
            Markers::Dirichlet => Marker::Dirichlet,
            Markers::Neumann => Marker::Neumann,
            Markers::Mixed if i % 2 == 0 => Marker::Dirichlet,
            Markers::Mixed => Marker::Neumann,
        };
        let four = [m(0), m(1), m(2), m(3)];
        let patch = match self.fixture.unwrap_or(Fixture::CubeStar) {
            Fixture::CubeStar => fixtures::cube_star(),
            Fixture::OctahedronStar => fixtures::octahedron_star(),
            Fixture::DistortedStar => fixtures::distorted_star(),
            Fixture::RandomStar => fixtures::random_star(seed),
            Fixture::HalfCube => fixtures::half_cube_spec(four).build(),
            Fixture::HalfOctahedron => fixtures::half_octahedron_spec(four).build(),
            Fixture::HalfStar => fixtures::random_half_star_spec(9, seed, m).build(),
        };
        Ok((patch, None))
    }
}
