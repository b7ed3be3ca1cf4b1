//! `generate`: tool meshes and terrain heightfields.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use regolith_core::geom::SeededStream;
use regolith_core::procgen::{generate_terrain, generate_tool, tool_spec_from_seed, TerrainParams, ToolSpec};

use crate::episodes::create_file;
use crate::error::{CliError, CliResult};

pub enum Target {
    ToolSeed(u64),
    ToolSpec(PathBuf),
    TerrainSeed(u64),
}

/// Writes the requested asset under `out` and returns the paths written.
pub fn cmd_generate(target: &Target, terrain: &TerrainParams, out: &Path) -> CliResult<Vec<PathBuf>> {
    match target {
        Target::ToolSeed(seed) => write_tool(&tool_spec_from_seed(*seed), out),
        Target::ToolSpec(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let spec = ToolSpec::from_json(&text).map_err(|source| CliError::Config {
                path: path.display().to_string(),
                source,
            })?;
            write_tool(&spec, out)
        }
        Target::TerrainSeed(seed) => {
            let field = generate_terrain(&mut SeededStream::new(*seed), terrain)?;
            let (bin, header) = (out.join("terrain.bin"), out.join("terrain.json"));
            let mut b = create_file(&bin)?;
            let mut h = create_file(&header)?;
            field.write(&mut b, &mut h)?;
            b.flush().map_err(|e| CliError::io(&bin, e))?;
            h.flush().map_err(|e| CliError::io(&header, e))?;
            Ok(vec![bin, header])
        }
    }
}

fn write_tool(spec: &ToolSpec, out: &Path) -> CliResult<Vec<PathBuf>> {
    let asset = generate_tool(spec)?;
    let paths = [out.join("tool.obj"), out.join("tool.stl"), out.join("tool.json")];
    let mut obj = create_file(&paths[0])?;
    asset.mesh.write_obj(&mut obj)?;
    obj.flush().map_err(|e| CliError::io(&paths[0], e))?;
    let mut stl = create_file(&paths[1])?;
    asset.mesh.write_stl(&mut stl)?;
    stl.flush().map_err(|e| CliError::io(&paths[1], e))?;
    crate::episodes::write_text(&paths[2], &spec.to_json()?)?;
    Ok(paths.to_vec())
}
