use anyhow::{bail, Context, Result};
use solarwind_core::grid::{RadialGrid, SphericalGrid};
use solarwind_core::hux::{hux_b, hux_f, HuxParams};
use solarwind_core::storage::{
    read_cube, synth_dataset, write_cube, write_sidecar, CubeMeta, DatasetManifest, Instrument, ManifestEntry,
    Split, SynthConfig, Warp,
};

use crate::args::{HuxArgs, HuxMode, SynthArgs};

pub fn synth(a: &SynthArgs) -> Result<()> {
    let grid = SphericalGrid::new(a.nlat, a.nlon)?;
    let radial = RadialGrid::heliospheric(a.nr)?;
    let test_count = a.test_count.unwrap_or(a.count / 4);
    if test_count > a.count {
        bail!("--test-count {test_count} exceeds --count {}", a.count);
    }
    let cfg = SynthConfig {
        seed: a.seed,
        count: a.count,
        radial,
        grid,
        l_band: a.l_band,
        hux: HuxParams::default(),
        warp: Warp {
            polar_alpha: a.polar_alpha,
            shear: a.shear,
        },
    };
    let samples = synth_dataset(&cfg)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = format!("cube_{i:04}.hwc");
        let path = a.out.join(&name);
        write_cube(&s.truth, &path)?;
        write_sidecar(
            &path,
            &CubeMeta {
                carrington_rotation: None,
                instrument: Instrument::Synth,
                provenance: format!("synth seed={} index={i} sample_seed={}", a.seed, s.seed),
            },
        )?;
        entries.push(ManifestEntry {
            cube_path: name,
            carrington_rotation: None,
            instrument: Instrument::Synth,
            split: if i >= a.count - test_count { Split::Test } else { Split::Train },
        });
    }
    let manifest_path = a.out.join("manifest.json");
    DatasetManifest::new(entries)?.save(&manifest_path)?;
    println!(
        "wrote {} cubes ({} train, {test_count} test) and {}",
        a.count,
        a.count - test_count,
        manifest_path.display()
    );
    Ok(())
}

pub fn hux(a: &HuxArgs) -> Result<()> {
    let cube = read_cube(&a.input)?;
    let radial = match a.nr {
        Some(n) => RadialGrid::heliospheric(n)?,
        None => cube.radial().clone(),
    };
    let params = HuxParams {
        alpha: a.alpha,
        r_h: a.r_h,
        ..HuxParams::default()
    };
    let (n_r, _, _) = cube.dims();
    let run = match a.mode {
        HuxMode::F => hux_f(cube.slice(0), &radial, cube.grid(), &params).context("HUX-f march failed")?,
        HuxMode::B => hux_b(cube.slice(n_r - 1), &radial, cube.grid(), &params).context("HUX-b march failed")?,
    };
    write_cube(&run.cube, &a.out)?;
    println!("wrote {} (max CFL ratio {:.4})", a.out.display(), run.max_cfl);
    Ok(())
}
