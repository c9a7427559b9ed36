use anyhow::{bail, Result};
use solarwind_core::storage::read_cube;

use super::write_file;
use crate::args::{ImageFormat, RenderArgs};
use crate::render::{pgm, ppm};

pub fn render(a: &RenderArgs) -> Result<()> {
    let cube = read_cube(&a.cube)?;
    let (n_r, n_lat, n_lon) = cube.dims();
    if a.radius_index >= n_r {
        bail!("--radius-index {} out of range (cube has {n_r} radii)", a.radius_index);
    }
    let format = a.format.unwrap_or_else(|| match a.out.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ppm") => ImageFormat::Ppm,
        _ => ImageFormat::Pgm,
    });
    let slice = cube.slice(a.radius_index);
    let bytes = match format {
        ImageFormat::Pgm => pgm(slice, n_lat, n_lon),
        ImageFormat::Ppm => ppm(slice, n_lat, n_lon),
    };
    write_file(&a.out, &bytes)?;
    println!("wrote {} ({n_lon}x{n_lat})", a.out.display());
    Ok(())
}
