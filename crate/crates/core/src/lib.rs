//! Shortest paths on terrain surfaces by pulling a truss model of the
//! surface taut.
//!
//! The pipeline: a [`heightfield::HeightField`] (loaded or synthesized) is
//! meshed into a [`mesh::TerrainMesh`], converted into a
//! [`truss::TrussNetwork`], relaxed by [`relax::solve_taut`] while its two
//! anchors are pulled apart, and the taut element set is read back as a
//! path or a face region by [`extract`]. [`oracle`] provides the exact graph
//! answers the solver is checked against.

pub mod extract;
pub mod geom;
pub mod heightfield;
pub mod mesh;
pub mod obj;
pub mod oracle;
pub mod relax;
pub mod render;
pub mod truss;
