//! Procedural tools and terrain.

mod bvh;
mod heldout;
mod mesh;
mod noise;
mod sdf;
mod spec;
mod terrain;
mod tool;

pub use bvh::{closest_point_on_triangle, ray_triangle, TriangleBvh};
pub use heldout::{
    heldout_set, tool_spec_from_seed, HeldoutOrigin, HeldoutTool, RESERVED_TOOL_SEEDS, TRAINING_TOOL_SEEDS,
};
pub use mesh::{MassProperties, TriMesh};
pub use sdf::{mesh_to_sdf, read_sdf, sdf_header, write_sdf, GridHeader, SDF_MARGIN_VOXELS};
pub use spec::{sample_tool_spec, ParamDist, ParamInfo, ToolSpec, TOOL_PARAMS};
pub use terrain::{generate_terrain, Crater, TerrainField, TerrainParams};
pub use tool::{
    build_tool_mesh, check_tool_mesh, generate_tool, generate_tool_with_voxel, ToolAsset, MAX_TOOL_EXTENT,
    MIN_TRIANGLE_AREA, TOOL_DENSITY, TOOL_SDF_VOXEL,
};
